#pragma once

#include "synmem/access_trace.hpp"
#include "synmem/config.hpp"
#include "synmem/energy.hpp"
#include "synmem/experiments.hpp"
#include "synmem/passes.hpp"
#include "synmem/quantization.hpp"
#include "synmem/rng.hpp"
#include "synmem/serialize.hpp"
#include "synmem/snn.hpp"
#include "synmem/stores.hpp"
#include "synmem/synapse_matrix.hpp"
#include "synmem/train.hpp"
