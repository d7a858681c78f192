// Trains a small quantized network and prints the van Rossum distance every
// 50 epochs along with the weight sparsity.
//
//   train_small [weight_bits]

#include <cstdio>
#include <cstdlib>

#include "synmem/synmem.hpp"

int main(int argc, char** argv) {
  synmem::snn::TrainConfig cfg;
  cfg.task.layers = {40, 20, 10};
  cfg.task.steps = 60;
  cfg.epochs = 300;
  cfg.quantized = true;
  cfg.weight_bits = argc > 1 ? std::atoi(argv[1]) : 4;
  cfg.schemes = {synmem::Scheme::Crossbar, synmem::Scheme::Bitmap};

  const auto r = synmem::snn::train(cfg);
  for (std::size_t e = 0; e < r.vr_curve.size(); e += 50)
    std::printf("epoch %4zu  vr %8.3f  sparsity %.3f\n", e, r.vr_curve[e], r.sparsity_curve[e]);
  for (const auto& a : r.accounts)
    std::printf("%-8s training energy %.4g pJ\n", std::string(synmem::scheme_name(a.scheme)).c_str(), a.total_pJ());
}
