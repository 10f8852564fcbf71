// Acceptance checks, one PASS/FAIL line per criterion. Usage:
//   amdm_acceptance [output_dir] [--only N[,N...]]
// CSV artifacts land in output_dir (default: acceptance_out).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amdm/amdm.hpp"
#include "oracles.hpp"

using namespace amdm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

io::fs::path g_out = "acceptance_out";

void emit(const std::string& name, const std::string& text) { io::write_file_atomic(g_out / name, text); }

// ---- 1 ---------------------------------------------------------------------------------

Outcome wavelet_identities() {
  double worst_rt = 0, worst_split = 0;
  for (WaveletFamily fam : {WaveletFamily::Haar, WaveletFamily::Daubechies4}) {
    const WaveletSpec spec{fam, 2};
    for (int i = 0; i < 50; ++i) {
      const auto x = oracle::random_grid(32, 32, 1000 + i + (fam == WaveletFamily::Haar ? 0 : 500));
      worst_rt = std::max(worst_rt, oracle::rel_err(idwt2(dwt2(x, spec), spec), x));
      worst_split = std::max(worst_split, oracle::rel_err(highpass_H(x, spec) + lowpass_L(x, spec), x));
    }
  }
  // Independent Haar butterfly as a cross-check on the transform itself.
  const auto x = oracle::random_grid(32, 32, 77);
  const auto s = dwt2(x, {WaveletFamily::Haar, 1});
  const auto ref = oracle::haar_level1(x);
  double butterfly = 0;
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) butterfly = std::max(butterfly, std::abs(s.approximation(r, c) - ref(r, c)));
  const bool ok = worst_rt <= 1e-10 && worst_split <= 1e-10 && butterfly <= 1e-12;
  return {ok, fmt("max rel err: idwt2(dwt2) %.2e, H+L %.2e; Haar butterfly %.2e", worst_rt, worst_split, butterfly)};
}

// ---- 2 ---------------------------------------------------------------------------------

Outcome mask_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  const WaveletSpec one{WaveletFamily::Haar, 1};
  for (int i = 0; i < 20; ++i) {
    const auto k = oracle::random_grid(16, 16, 300 + i);
    double a = rng.uniform(), b = rng.uniform();
    if (a > b) std::swap(a, b);
    const double c = 0.5 * rng.uniform();
    const auto set = generate_masks(k, one, ThresholdRange::quantile(a, b), {ThresholdRange::quantile(c)});
    // Residuals from the block-mean oracle: L is the 2x2 mean, H = identity - L.
    const auto low = oracle::haar_block_mean(k);
    RealGrid low_res(16, 16), high_res(16, 16);
    for (std::size_t j = 0; j < k.size(); ++j) {
      low_res[j] = std::abs(low[j]);
      high_res[j] = std::abs(k[j] - low[j]);
    }
    mismatches += set.low.grid != oracle::quantile_mask(low_res, a, b);
    mismatches += set.highs[0].grid != oracle::quantile_mask(high_res, c, 1.0);
    // Default two-level spec against the oracle on the library's residuals.
    const auto def = generate_masks(k, {}, MaskRanges::defaults(2));
    const auto r = frequency_residuals(k, {});
    mismatches += def.low.grid != oracle::quantile_mask(r.low_res, 0.7, 1.0);
    mismatches += def.highs[0].grid != oracle::quantile_mask(r.high_res, 0.5, 1.0);
    mismatches += def.highs[1].grid != oracle::quantile_mask(r.high_res, 0.75, 1.0);
  }
  int violations = 0;
  for (int t = 0; t < 100; ++t) {
    const auto k = oracle::random_grid(16, 16, 600 + t);
    double a = rng.uniform(), b = rng.uniform();
    if (a > b) std::swap(a, b);
    const double a2 = a * rng.uniform(), b2 = b + (1.0 - b) * rng.uniform();
    const auto narrow = generate_masks(k, {}, ThresholdRange::quantile(a, b), {ThresholdRange::quantile(a, b)});
    const auto wide = generate_masks(k, {}, ThresholdRange::quantile(a2, b2), {ThresholdRange::quantile(a2, b2)});
    for (std::size_t j = 0; j < k.size(); ++j) {
      violations += narrow.low.grid[j] > wide.low.grid[j];
      violations += narrow.highs[0].grid[j] > wide.highs[0].grid[j];
    }
  }
  return {mismatches == 0 && violations == 0,
          fmt("%g oracle mismatches over 100 masks; %g monotonicity violations over 100 range pairs", mismatches,
              violations)};
}

// ---- 3 ---------------------------------------------------------------------------------

Outcome dc_oracle() {
  Rng rng(33);
  double worst = 0;
  int idem_fail = 0;
  for (int i = 0; i < 50; ++i) {
    const auto truth = oracle::random_grid(8, 8, 900 + i);
    const auto k_est = oracle::random_grid(8, 8, 950 + i);
    BinaryGrid m(8, 8);
    for (auto& v : m) v = rng.uniform() < 0.4;
    const Measurement meas = apply_sampling(truth, SamplingMask(m), 0.0, 0);
    for (double mu : {0.0, 0.5, 10.0}) {
      const auto closed = data_consistency(k_est, meas, mu);
      ComplexGrid ref(8, 8);
      for (std::size_t j = 0; j < ref.size(); ++j) ref[j] = oracle::dc_minimize(meas.y[j], k_est[j], m[j], mu);
      worst = std::max(worst, oracle::rel_err(closed, ref));
      if (mu == 0.0 && data_consistency(closed, meas, 0.0) != closed) ++idem_fail;
    }
  }
  return {worst <= 1e-6 && idem_fail == 0,
          fmt("max rel err vs numerical minimizer %.2e; idempotence failures at mu=0: %g "
              "(mu>0 is a contraction toward y, not a projection)",
              worst, idem_fail)};
}

// ---- 4 ---------------------------------------------------------------------------------

constexpr double kTargetVar = 0.25;

std::string sampler_stats_csv() {
  const NoiseSchedule schedule{0.01, 378.0, 500};
  Rng setup(4);
  Tensor3 mean(2, 8, 8);
  for (double& v : mean.values()) v = 2.0 * setup.uniform() - 1.0;
  const AnalyticGaussianScore score(mean, kTargetVar);
  const std::size_t n = 2000;
  std::vector<double> sum(mean.size(), 0.0), sumsq(mean.size(), 0.0);
  Rng rng(derive_seed(4, "sampler"));
  for (std::size_t s = 0; s < n; ++s) {
    Tensor3 init(2, 8, 8);
    rng.fill_normal(init.values(), schedule.sigma_max);
    const Tensor3 x = pc_sample(score, schedule, std::move(init), 0.16, 1, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[i] += x[i];
      sumsq[i] += x[i] * x[i];
    }
  }
  std::string csv = "component,target_mean,sample_mean,target_var,sample_var\n";
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double m = sum[i] / n;
    const double var = (sumsq[i] - n * m * m) / (n - 1);
    csv += std::to_string(i) + "," + io::fmt_double(mean[i]) + "," + io::fmt_double(m) + "," +
           io::fmt_double(kTargetVar) + "," + io::fmt_double(var) + "\n";
  }
  return csv;
}

Outcome sampler_statistics() {
  const std::string csv = sampler_stats_csv();
  emit("sampler_stats.csv", csv);
  double worst_mean = 0, var_sum = 0, worst_var = 0;
  std::size_t rows = 0;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line.front() == 'c') continue;
    double idx, tm, sm, tv, sv;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &idx, &tm, &sm, &tv, &sv) != 5) continue;
    worst_mean = std::max(worst_mean, std::abs(sm - tm));
    worst_var = std::max(worst_var, std::abs(sv / tv - 1.0));
    var_sum += sv;
    ++rows;
  }
  const double pooled = var_sum / static_cast<double>(rows) / kTargetVar - 1.0;
  return {rows == 128 && worst_mean <= 0.05 && std::abs(pooled) <= 0.10,
          fmt("max |mean err| %.4f over 128 components; pooled variance rel err %+.4f "
              "(worst single component %.4f)",
              worst_mean, pooled, worst_var)};
}

// ---- 5 ---------------------------------------------------------------------------------

Outcome gradient_check() {
  TinyDenoiser m(6, 8, 5);
  for (std::size_t l = 0; l < 3; ++l)
    for (double& b : m.biases(l)) b = 0.05;
  Rng rng(55);
  Tensor3 x(6, 8, 8), r(6, 8, 8);
  rng.fill_normal(x.values());
  rng.fill_normal(r.values());
  const double sigma = 0.7;
  auto probe = [&]() {
    const Tensor3 out = m.evaluate(x, sigma);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += 0.5 * out[i] * out[i] * r[i];
    return s;
  };
  std::vector<double> grad(m.param_count(), 0.0);
  m.evaluate_with_gradient(
      x, sigma,
      [&](const Tensor3& out) {
        Tensor3 g(out.channels(), out.height(), out.width());
        for (std::size_t i = 0; i < out.size(); ++i) g[i] = out[i] * r[i];
        return g;
      },
      grad);
  auto params = m.parameters();
  const double h = 1e-6;
  std::string detail;
  bool ok = true;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t off = m.layer_offset(l);
    const std::size_t nw = m.shapes()[l].weight_count(), nb = m.shapes()[l].out;
    for (int cls = 0; cls < 2; ++cls) {
      const std::size_t begin = off + (cls == 0 ? 0 : nw), end = begin + (cls == 0 ? nw : nb);
      double worst = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = probe();
        params[i] = keep - h;
        const double dn = probe();
        params[i] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
      }
      ok = ok && worst < 1e-4;
      detail += (detail.empty() ? "" : ", ") + std::string(cls == 0 ? "W" : "b") + std::to_string(l + 1) + " " +
                fmt("%.1e", worst);
    }
  }
  return {ok, "max rel err per class: " + detail + " (" + std::to_string(m.param_count()) + " params)"};
}

// ---- 6 ---------------------------------------------------------------------------------

double fixed_eval_loss(const TinyDenoiser& m, const std::vector<Tensor3>& items, const NoiseSchedule& schedule) {
  double total = 0;
  for (std::uint64_t s = 0; s < 10; ++s) total += dsm_loss(m, items, schedule, derive_seed(s, "eval")).loss;
  return total / 10.0;
}

Outcome training_sanity() {
  const Dataset ds = make_dataset(PhantomKind::GaussianBlobs, 200, 32, 7);
  const auto tensors = stacked_training_set(ds, {}, MaskRanges::defaults(2), layout_d1());
  const std::vector<Tensor3> eval_items(tensors.begin(), tensors.begin() + 20);
  const NoiseSchedule schedule;
  TinyDenoiser m(6, 16, 1);
  const double before = fixed_eval_loss(m, eval_items, schedule);
  TrainingConfig cfg;  // 2000 steps, batch 2, Adam 0.9/0.999
  const TrainingResult tr = train(m, tensors, cfg, schedule, 3);
  const double after = fixed_eval_loss(m, eval_items, schedule);
  std::string csv = "step,loss\n";
  bool finite = tr.loss_trace.size() == cfg.steps;
  for (std::size_t i = 0; i < tr.loss_trace.size(); ++i) {
    finite = finite && std::isfinite(tr.loss_trace[i]);
    csv += std::to_string(i) + "," + io::fmt_double(tr.loss_trace[i]) + "\n";
  }
  emit("training_loss.csv", csv);
  double tail = 0;
  for (std::size_t i = tr.loss_trace.size() - 100; i < tr.loss_trace.size(); ++i) tail += tr.loss_trace[i] / 100.0;
  const double ratio = after / before;
  return {finite && ratio <= 0.5,
          fmt("fixed-set dsm_loss %.1f -> %.1f (ratio %.3f); batch trace step 0 %.1f", before, after, ratio,
              tr.loss_trace.front()) +
              fmt(", last-100 mean %.1f", tail)};
}

// ---- 7, 8 --------------------------------------------------------------------------------

struct EndToEnd {
  std::string summary_csv;
  std::vector<std::string> traces;
  std::vector<double> zf, final_psnr, quarter_psnr;
};

EndToEnd end_to_end() {
  EndToEnd e;
  e.summary_csv = "seed,zero_filled_psnr,recon_psnr,psnr_at_25pct,zero_filled,amdm\n";
  for (std::uint64_t seed : {0, 1, 2}) {
    Scenario s;  // Shepp-Logan 64, random2d R=4
    s.seed = seed;
    ReconConfig cfg;  // T=200, per-iteration DC, mu=0
    const TrialResult r = run_trial(s, cfg, 1e-4);
    const auto& trace = r.run.state.trace;
    const double quarter = trace[cfg.outer_steps / 4 - 1].row.psnr;
    e.zf.push_back(r.zero_filled.psnr);
    e.final_psnr.push_back(r.recon.psnr);
    e.quarter_psnr.push_back(quarter);
    e.summary_csv += std::to_string(seed) + "," + io::fmt_double(r.zero_filled.psnr) + "," +
                     io::fmt_double(r.recon.psnr) + "," + io::fmt_double(quarter) + "," + r.zero_filled.cell() + "," +
                     r.recon.cell() + "\n";
    e.traces.push_back(metrics_trace_csv(trace));
  }
  return e;
}

EndToEnd g_e2e;
bool g_e2e_done = false;

const EndToEnd& e2e_cached() {
  if (!g_e2e_done) {
    g_e2e = end_to_end();
    emit("e2e_summary.csv", g_e2e.summary_csv);
    for (std::size_t i = 0; i < g_e2e.traces.size(); ++i) emit("trace_seed" + std::to_string(i) + ".csv", g_e2e.traces[i]);
    g_e2e_done = true;
  }
  return g_e2e;
}

Outcome e2e_margin() {
  const auto& e = e2e_cached();
  const double zf = median3(e.zf), rec = median3(e.final_psnr);
  return {rec >= zf + 3.0, fmt("median PSNR %.2f dB vs zero-filled %.2f dB (margin %+.2f dB, need +3)", rec, zf, rec - zf)};
}

Outcome convergence_shape() {
  const auto& e = e2e_cached();
  const double fin = median3(e.final_psnr), q = median3(e.quarter_psnr);
  return {fin >= q, fmt("median final PSNR %.2f dB vs %.2f dB at iteration 50 of 200; traces in trace_seed*.csv", fin, q)};
}

// ---- 9 ---------------------------------------------------------------------------------

Outcome fully_sampled() {
  double worst = 0;
  for (PhantomKind kind : {PhantomKind::SheppLogan, PhantomKind::SmoothRandom}) {
    const ComplexGrid img = make_phantom(kind, 32, 9);
    BinaryGrid ones(32, 32, 1);
    const Measurement meas = apply_sampling(fft2c(img), SamplingMask(ones), 0.0, 0);
    ReconConfig cfg;
    cfg.outer_steps = 10;
    // Scores that know nothing about the image: a wrong analytic prior and an untrained network.
    Tensor3 junk(6, 32, 32, 3.0);
    const AnalyticGaussianScore wrong(junk, 0.5);
    const TinyDenoiser net(6, 4, 11);
    const auto res = reconstruct(meas, wrong, net, cfg);
    worst = std::max(worst, oracle::max_abs_diff(res.image, img));
    const auto res2 = reconstruct(meas, net, wrong, cfg);
    worst = std::max(worst, oracle::max_abs_diff(res2.image, img));
  }
  return {worst <= 1e-10, fmt("max |recon - truth| %.2e over 2 phantoms x 2 score pairings", worst)};
}

// ---- 10 --------------------------------------------------------------------------------

Outcome channel_ablation_check() {
  Scenario s;  // the criterion 7 setup, seed 0
  const ReconConfig base;
  AblationOptions opt;
  opt.trained = false;
  const auto rows = channel_ablation(s, base, {4, 6, 8}, opt);
  emit("channel_ablation.csv", ablation_csv(rows));
  std::string cells;
  bool finite = rows.size() == 3;
  for (const auto& r : rows) {
    finite = finite && std::isfinite(r.metrics.psnr);
    cells += (cells.empty() ? "" : ", ") + std::to_string(r.channels) + "ch " + r.metrics.cell();
  }
  return {finite, cells + "; best " + std::to_string(best_channels(rows)) + " channels (recorded, not asserted)"};
}

// ---- 11 --------------------------------------------------------------------------------

Outcome determinism() {
  // Reads back what criteria 4 and 7 wrote, runs both again, compares bytes.
  if (!io::fs::exists(g_out / "sampler_stats.csv")) emit("sampler_stats.csv", sampler_stats_csv());
  e2e_cached();
  const std::string stats_a = io::read_file(g_out / "sampler_stats.csv");
  const std::string e2e_a = io::read_file(g_out / "e2e_summary.csv");
  std::vector<std::string> traces_a;
  for (int i = 0; i < 3; ++i) traces_a.push_back(io::read_file(g_out / ("trace_seed" + std::to_string(i) + ".csv")));
  const std::string stats_b = sampler_stats_csv();
  const EndToEnd e = end_to_end();
  int differ = (stats_a != stats_b) + (e2e_a != e.summary_csv);
  for (int i = 0; i < 3; ++i) differ += traces_a[static_cast<std::size_t>(i)] != e.traces[static_cast<std::size_t>(i)];
  return {differ == 0, fmt("%g of 5 CSVs differ between runs (sampler stats, e2e summary, 3 traces)", differ)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::string list = argv[++i];
      for (std::size_t p = 0; p < list.size();) {
        const std::size_t q = list.find(',', p);
        only.insert(std::stoi(list.substr(p, q - p)));
        p = q == std::string::npos ? list.size() : q + 1;
      }
    } else {
      g_out = a;
    }
  }
  io::fs::create_directories(g_out);

  const std::vector<Criterion> criteria = {
      {1, "wavelet correctness", 5, wavelet_identities},
      {2, "mask oracle equivalence", 5, mask_oracle},
      {3, "data consistency oracle", 10, dc_oracle},
      {4, "sampler statistics", 120, sampler_statistics},
      {5, "gradient correctness", 60, gradient_check},
      {6, "training sanity", 600, training_sanity},
      {7, "end-to-end margin", 300, e2e_margin},
      {8, "convergence shape", 300, convergence_shape},
      {9, "fully sampled fixed point", 10, fully_sampled},
      {10, "channel ablation harness", 900, channel_ablation_check},
      {11, "determinism", 600, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" [over budget: %.0f s]", c.budget_s);
    }
    failed += !o.pass;
    std::printf("%s  [%2d] %-27s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
