// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Run from the build tree; the CLI path is baked in.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "synmem/synmem.hpp"

using namespace synmem;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int sh(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // banner
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string x;
    std::istringstream ls(line);
    while (std::getline(ls, x, ',')) f.push_back(x);
    rows.push_back(f);
  }
  return rows;
}

// ---------------------------------------------------------------------------

Outcome store_equivalence() {
  const double densities[] = {0.05, 0.1, 0.25, 0.5, 0.75, 1.0};
  Xorshift64Star rng(2024);
  std::size_t mismatches = 0, lookups = 0;
  const int matrices = 240;
  for (int n = 0; n < matrices; ++n) {
    const std::size_t pre = 1 + rng.below(64), post = 1 + rng.below(64);
    const double d = densities[n % 6];
    const int b = 2 + static_cast<int>(rng.below(7));
    const auto m = random_synapse_matrix(pre, post, d, 1000 + n, b);
    for (const Store& s : {Store{build_crossbar(m, b)}, Store{build_csr(m, b)},
                           Store{build_bitmap(m, b, 1 + static_cast<int>(rng.below(64)))}}) {
      for (std::size_t i = 0; i < pre; ++i, ++lookups)
        mismatches += oracle::as_pairs(forward_lookup(s, i)) != oracle::row(m, i);
      for (std::size_t j = 0; j < post; ++j, ++lookups)
        mismatches += oracle::as_pairs(reverse_lookup(s, j)) != oracle::column(m, j);
    }
  }
  return {mismatches == 0, fmt("%d matrices, %zu lookups, %zu mismatches", matrices, lookups, mismatches)};
}

Outcome functional_correctness() {
  std::size_t geometries = 0, mismatches = 0;
  for (std::size_t h = 1; h <= 8; h += 1)
    for (std::size_t w : {1u, 4u, 8u})
      for (std::size_t k : {1u, 3u})
        for (std::size_t ci : {1u, 2u})
          for (std::size_t co : {1u, 2u}) {
            const ConvGeometry g{h, w, k, 3, ci, co};
            ++geometries;
            std::vector<double> kernel(g.kernel_size());
            for (std::size_t q = 0; q < kernel.size(); ++q) kernel[q] = quant::quantize_weight(0.9 - 0.07 * q, 8);
            const Store fn = build_functional(g, kernel, 8);
            const Store csr = build_csr(materialize(std::get<FunctionalStore>(fn)), 8);
            for (std::size_t i = 0; i < g.n_pre(); ++i)
              mismatches += oracle::as_pairs(forward_lookup(fn, i)) != oracle::as_pairs(forward_lookup(csr, i));
            for (std::size_t j = 0; j < g.n_post(); ++j)
              mismatches += oracle::as_pairs(reverse_lookup(fn, j)) != oracle::as_pairs(reverse_lookup(csr, j));

            std::map<std::pair<std::size_t, std::size_t>, std::size_t> fwd, rev;
            for (std::size_t i = 0; i < g.n_pre(); ++i)
              for (const auto& a : conv_forward_addresses(g, neuron_coord(g, i))) fwd[{i, neuron_id(g, a.neuron)}] = a.kernel_index;
            for (std::size_t j = 0; j < g.n_post(); ++j)
              for (const auto& a : conv_reverse_addresses(g, neuron_coord(g, j))) rev[{neuron_id(g, a.neuron), j}] = a.kernel_index;
            mismatches += fwd != rev;
          }
  return {mismatches == 0, fmt("%zu geometries up to (8,8,3,3,2,2), %zu mismatches", geometries, mismatches)};
}

Outcome storage_closed_forms() {
  Xorshift64Star rng(7);
  std::size_t bad = 0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t pre = 1 + rng.below(128), post = 1 + rng.below(128);
    const int b = 2 + static_cast<int>(rng.below(15)), word = 1 + static_cast<int>(rng.below(64));
    const auto m = random_synapse_matrix(pre, post, rng.uniform(), 500 + n, b);
    bad += storage_bits(build_crossbar(m, b)).total() != oracle::crossbar_bits(pre, post, b);
    bad += storage_bits(build_csr(m, b)).total() != oracle::csr_bits(pre, post, m.nnz(), b);
    bad += storage_bits(build_bitmap(m, b, word)).total() != oracle::bitmap_bits(pre, post, m.nnz(), b, word);
    const ConvGeometry g{1 + rng.below(30), 1 + rng.below(30), 1 + 2 * rng.below(3), 1 + 2 * rng.below(3),
                         1 + rng.below(8), 1 + rng.below(8)};
    bad += storage_bits(build_functional(g, std::vector<double>(g.kernel_size(), 0.5), b)).total() !=
           oracle::functional_bits(g, b);
  }
  const auto cb = storage_bits(build_crossbar(random_synapse_matrix(728, 128, 0.75, 1, 8), 8)).total();
  const ConvGeometry conv{28, 28, 3, 3, 32, 32};
  const auto fn = storage_bits(build_functional(conv, std::vector<double>(conv.kernel_size(), 0.5), 8)).total();
  const bool ok = bad == 0 && cb == 745472 && fn == 73728;
  return {ok, fmt("400 instances, %zu mismatches; CB 728x128x8 = %llu bits, Functional conv = %llu bits", bad,
                  static_cast<unsigned long long>(cb), static_cast<unsigned long long>(fn))};
}

std::vector<energy::SweepRow> conv_rows_8b() {
  static const auto rows = energy::conv_sweep(energy::ConvLayer{}, {8}, energy::CostModel::calibrated());
  return rows;
}

Outcome conv_backward_advantage() {
  const auto rows = conv_rows_8b();
  const auto& csr = rows[0];
  const auto& fn = rows[1];
  const double ratio = fn.backward_pJ / csr.backward_pJ;
  const auto fn_weight_reads = fn.traces.backward.weight_reads();
  std::uint64_t csr_reads = 0;
  for (const auto& [bank, counts] : csr.traces.backward.banks()) csr_reads += counts.reads;
  const bool ok = ratio >= 0.30 && ratio <= 0.60 && fn_weight_reads < csr_reads;
  return {ok, fmt("functional/PB-CSR backward energy = %.4f (band [0.30, 0.60]); weight reads %llu < PB-CSR reads %llu",
                  ratio, static_cast<unsigned long long>(fn_weight_reads), static_cast<unsigned long long>(csr_reads))};
}

Outcome forward_overhead() {
  const auto rows = conv_rows_8b();
  const double ratio = rows[1].forward_pJ / rows[0].forward_pJ;
  return {ratio <= 1.10, fmt("functional/PB-CSR forward energy = %.4f (bound 1.10)", ratio)};
}

Outcome density_crossover() {
  const auto d = energy::linspace(0.05, 1.0, 10);
  const auto f = energy::linspace(0.0, 0.9, 10);
  const auto grid = energy::density_leak_grid(energy::FcLayer{}, 8, d, f, energy::CostModel::calibrated());
  std::vector<Scheme> low_leak;
  for (const auto& p : grid)
    if (p.leak_fraction == f.front()) low_leak.push_back(p.winner);
  const Scheme at_sparse = low_leak.front(), at_full = low_leak.back();
  std::size_t crossover = 0;
  double where = -1;
  for (std::size_t k = 1; k < low_leak.size(); ++k)
    if ((low_leak[k] == Scheme::Crossbar) != (low_leak[k - 1] == Scheme::Crossbar)) {
      ++crossover;
      if (where < 0) where = d[k];
    }
  const bool ok = at_full == Scheme::Crossbar && at_sparse != Scheme::Crossbar && crossover >= 1;
  return {ok, fmt("10x10 grid; winner at d=1.0: %s, at d=0.05: %s; first CB win at d=%.3f",
                  std::string(scheme_name(at_full)).c_str(), std::string(scheme_name(at_sparse)).c_str(), where)};
}

Outcome quantization_suite() {
  std::size_t bad = 0;
  for (int b = 2; b <= 16; ++b) {
    bad += quant::sigma(b) != std::ldexp(1.0, 1 - b);
    const auto [lo, hi] = quant::weight_range(b);
    bad += lo != -1.0 + quant::sigma(b) || hi != 1.0 - quant::sigma(b);
    for (std::size_t fan : {1u, 3u, 50u, 728u, 4096u}) {
      int e = 0;
      bad += std::frexp(quant::eta(b, fan), &e) != 0.5;  // exact power of two
    }
  }
  const double eta8 = quant::eta(8, 728);
  bad += eta8 != 16.0;

  Xorshift64Star rng(11);
  std::size_t idem = 0;
  for (int n = 0; n < 10000; ++n) {
    const int b = 2 + static_cast<int>(rng.below(10));
    const double w = quant::quantize_weight(rng.uniform(-2.0, 2.0), b);
    idem += quant::quantize_weight(w, b) != w;
  }
  Xorshift64Star sr(12);
  const double x = 0.3, step = 0.25;
  const int draws = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int n = 0; n < draws; ++n) {
    const double v = quant::stochastic_round(x, step, sr);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sumsq / draws - mean * mean) / draws);
  const bool sr_ok = std::abs(mean - x) <= 3 * se;
  const bool ok = bad == 0 && idem == 0 && sr_ok;
  return {ok, fmt("closed-form mismatches %zu, eta(8,728) = %g, idempotence failures %zu/10000, "
                  "stochastic rounding mean %.5f vs %.2f (3 SE = %.5f)",
                  bad, eta8, idem, mean, x, 3 * se)};
}

Outcome gradient_check() {
  double worst = 0.0;
  const int networks = 30;
  for (int s = 1; s <= networks; ++s) {
    const auto c = gradcheck::random_case(static_cast<std::uint64_t>(s) * 977);
    worst = std::max(worst, gradcheck::relative_error(gradcheck::analytic(c), gradcheck::numeric(c)));
  }
  return {worst < 1e-4, fmt("%d networks (<=10 neurons, <=10 steps), worst relative error %.3g", networks, worst)};
}

Outcome desk_scale_learning() {
  snn::TrainConfig cfg;  // 200-100-50, 100 steps, 2000 epochs, full precision
  const auto r = snn::train(cfg);
  const auto& v = r.vr_curve;
  const double initial = r.initial_vr(), final = r.final_vr();
  const bool halved = final < 0.5 * initial;

  // Trailing 100-epoch moving average, checked at every epoch after 200.
  std::vector<double> ma(v.size(), 0.0);
  double window = 0.0;
  for (std::size_t e = 0; e < v.size(); ++e) {
    window += v[e];
    if (e >= 100) window -= v[e - 100];
    if (e >= 99) ma[e] = window / 100.0;
  }
  std::size_t rises = 0;
  double worst = 0.0;
  std::size_t worst_at = 0;
  for (std::size_t e = 201; e < v.size(); ++e)
    if (ma[e] > ma[e - 1]) {
      ++rises;
      if (ma[e] - ma[e - 1] > worst) {
        worst = ma[e] - ma[e - 1];
        worst_at = e;
      }
    }
  const bool monotone = rises == 0;
  return {halved && monotone,
          fmt("VR %.3f -> %.3f (ratio %.3f, need < 0.5: %s); moving average rises at %zu of %zu epochs after 200, "
              "largest +%.4f at epoch %zu (need 0: %s)",
              initial, final, final / initial, halved ? "ok" : "no", rises, v.size() - 201, worst, worst_at,
              monotone ? "ok" : "no")};
}

// Criteria 10 and 11 share the CLI runs of the shipped configs.
struct CliRuns {
  bool ran = false;
  std::vector<std::string> differing;
  std::size_t files = 0;
  std::string frontier_csv;
  std::string error;
};

CliRuns run_cli_twice() {
  CliRuns out;
  const fs::path src = SYNMEM_SOURCE_DIR;
  const fs::path root = fs::temp_directory_path() / "synmem_acceptance";
  fs::remove_all(root);
  struct Cmd {
    std::string sub, config, csv;
  };
  const std::vector<Cmd> cmds{{"fc-sweep", "fc_sweep.json", "fc_sweep.csv"},
                              {"conv-sweep", "conv_sweep.json", "conv_sweep.csv"},
                              {"density-leak-grid", "density_leak_grid.json", "density_leak_grid.csv"},
                              {"train-frontier", "train_frontier.json", "train_frontier.csv"}};
  for (const auto& [sub, cfg, csv_name] : cmds)
    for (const char* pass : {"a", "b"}) {
      const fs::path dir = root / pass / sub;
      const std::string cmd = std::string(SYNMEM_CLI) + " " + sub + " --config " + (src / "configs" / cfg).string() +
                              " --seed 1 --jobs 1 --out " + dir.string() + " >/dev/null";
      if (const int rc = sh(cmd); rc != 0) {
        out.error = sub + " exited with " + std::to_string(rc);
        return out;
      }
      const fs::path csv = dir / csv_name;
      if (sh(std::string(SYNMEM_CLI) + " check-csv " + csv.string() + " --schema " + sub + " > " +
             (dir.parent_path() / (sub + ".check")).string()) != 0) {
        out.error = "check-csv rejected " + csv.string();
        return out;
      }
    }
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    ++out.files;
    std::string other = slurp(root / "b" / rel), mine = slurp(e.path());
    if (rel.extension() == ".check") {  // check-csv echoes its path
      const auto strip = [](std::string s) { return s.substr(s.find(':')); };
      mine = strip(mine);
      other = strip(other);
    }
    if (!fs::exists(root / "b" / rel) || other != mine) out.differing.push_back(rel.string());
  }
  out.frontier_csv = slurp(root / "a" / "train-frontier" / "train_frontier.csv");
  out.ran = true;
  return out;
}

Outcome precision_sparsity(const CliRuns& runs) {
  if (!runs.ran) return {false, "CLI frontier run failed: " + runs.error};
  std::map<int, double> sparsity;
  std::map<std::pair<std::string, int>, double> energy;
  for (const auto& f : csv_rows(runs.frontier_csv)) {
    const int b = std::stoi(f[1]);
    energy[{f[0], b}] = std::stod(f[6]);
    sparsity[b] = std::stod(f[9]);
  }
  const double r2 = energy[{"PB-BMP", 2}] / energy[{"CB", 2}];
  const double r5 = energy[{"PB-BMP", 5}] / energy[{"CB", 5}];
  const bool ok = sparsity[2] > sparsity[6] && r2 < r5;
  return {ok, fmt("mean sparsity 2-bit %.4f vs 6-bit %.4f; PB-BMP/CB training energy 2-bit %.4f vs 5-bit %.4f",
                  sparsity[2], sparsity[6], r2, r5)};
}

Outcome determinism(const CliRuns& runs) {
  if (!runs.ran) return {false, runs.error};
  std::string which;
  for (const auto& d : runs.differing) which += " " + d;
  return {runs.differing.empty(),
          fmt("4 experiment commands + check-csv rerun on shipped configs, %zu files compared, %zu differ%s",
              runs.files, runs.differing.size(), which.c_str())};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  };

  report(1, "store equivalence", store_equivalence);
  report(2, "functional correctness", functional_correctness);
  report(3, "storage closed forms", storage_closed_forms);
  report(4, "conv backward advantage", conv_backward_advantage);
  report(5, "forward overhead bound", forward_overhead);
  report(6, "density crossover", density_crossover);
  report(7, "quantization suite", quantization_suite);
  report(8, "gradient check", gradient_check);
  report(9, "learning at desk scale", desk_scale_learning);

  const auto t0 = std::chrono::steady_clock::now();
  const CliRuns runs = run_cli_twice();
  const double cli_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("     (shipped configs run twice through the CLI in %.1fs)\n", cli_secs);
  report(10, "precision-sparsity direction", [&] { return precision_sparsity(runs); });
  report(11, "determinism", [&] { return determinism(runs); });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures ? 1 : 0;
}
