// Encodes one random fully connected layer three ways and prints storage and
// per-pass energy under the default cost model.
//
//   fc_energy [density] [weight_bits]

#include <cstdio>
#include <cstdlib>

#include "synmem/synmem.hpp"

using namespace synmem;

int main(int argc, char** argv) {
  const double density = argc > 1 ? std::atof(argv[1]) : 0.75;
  const int bits = argc > 2 ? std::atoi(argv[2]) : 8;
  const auto m = random_synapse_matrix(728, 128, density, 1, bits);
  const auto model = energy::CostModel::calibrated();

  std::printf("%-8s %12s %14s %14s\n", "scheme", "bits", "forward_pJ", "backward_pJ");
  for (const Store& s : {Store{build_crossbar(m, bits)}, Store{build_csr(m, bits)}, Store{build_bitmap(m, bits)}}) {
    const double fwd = energy::pass_energy(forward_pass_trace(s), model).active_pJ;
    const double bwd = energy::pass_energy(backward_pass_trace(s), model).active_pJ;
    std::printf("%-8s %12llu %14.1f %14.1f\n", std::string(scheme_name(scheme_of(s))).c_str(),
                static_cast<unsigned long long>(storage_bits(s).total()), fwd, bwd);
  }
}
