// amdm: data generation, training, reconstruction and evaluation driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "amdm/amdm.hpp"

using namespace amdm;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what) : std::runtime_error("stage '" + stage + "': " + what) {}
};

// Bad flag combinations found after parsing; reported with usage text.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Collects everything the run manifest needs: resolved flags, derived seeds,
// inputs, outputs and per-stage wall-clock time.
class Run {
 public:
  Run(CLI::App* sub, std::string out_flag) : sub_(sub) {
    if (!out_flag.empty()) dir_ = out_flag;
    else if (const char* env = std::getenv("AMDM_OUTPUT_DIR"); env != nullptr && *env != '\0') dir_ = env;
    else dir_ = "out";
  }

  const fs::path& dir() const { return dir_; }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto done = [&] {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const std::string key = "time_" + name + "_s";
      auto it = std::find_if(timings_.begin(), timings_.end(), [&](const auto& t) { return t.first == key; });
      if (it == timings_.end()) timings_.emplace_back(key, s);
      else it->second += s;
    };
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        done();
      } else {
        auto r = f();
        done();
        return r;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  }

  void note(const std::string& key, const std::string& value) { extra_.emplace_back(key, value); }
  void input(const std::string& key, const fs::path& p) { extra_.emplace_back("input_" + key, p.string()); }

  fs::path output(const std::string& name) {
    const fs::path p = dir_ / name;
    outputs_.push_back(p.string());
    return p;
  }

  void write(const std::string& name, const std::string& text) {
    const fs::path p = output(name);
    stage("write", [&] { io::write_file_atomic(p, text); });
  }

  void write_manifest() {
    io::KeyValues kv{{"command", sub_->get_name()}, {"version", kVersion}};
    // Flag values under their flag names, so the manifest doubles as a --config file.
    for (const CLI::Option* o : sub_->get_options()) {
      if (o->get_lnames().empty()) continue;
      const std::string& name = o->get_lnames().front();
      if (name == "help" || name == "config" || name == "out") continue;
      std::string v;
      if (o->count() > 0) {
        for (const auto& r : o->reduced_results()) v += (v.empty() ? "" : ",") + r;
        if (o->get_expected_min() == 0 && v.empty()) v = "true";
      } else {
        v = o->get_expected_min() == 0 ? "false" : o->get_default_str();
      }
      kv.emplace_back(name, v);
    }
    kv.insert(kv.end(), extra_.begin(), extra_.end());
    kv.emplace_back("output_dir", dir_.string());
    for (std::size_t i = 0; i < outputs_.size(); ++i) kv.emplace_back("output_" + std::to_string(i + 1), outputs_[i]);
    for (const auto& [k, v] : timings_) kv.emplace_back(k, io::fmt_double(v));
    io::write_file_atomic(dir_ / "run_manifest.txt", io::encode_key_values(kv));
  }

  void ensure_dir() {
    stage("output", [&] { fs::create_directories(dir_); });
  }

 private:
  CLI::App* sub_;
  fs::path dir_;
  io::KeyValues extra_;
  std::vector<std::pair<std::string, double>> timings_;
  std::vector<std::string> outputs_;
};

// Config values fill in flags that were not given on the command line.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::map<std::string, std::string> kv;
  try {
    kv = io::parse_key_values(io::read_file(path));
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  for (const auto& [key, value] : kv) {
    CLI::Option* o = sub->get_option_no_throw("--" + key);
    if (o == nullptr || key == "config") continue;  // manifests carry extra keys
    if (o->count() > 0 || value.empty()) continue;
    o->add_result(value);
    try {
      o->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ": key '" + key + "': " + e.what());
    }
  }
}

ThresholdRange parse_range(const std::string& text, ThresholdMode mode) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("threshold range '" + text + "' must look like lo:hi");
  double lo = 0, hi = 0;
  try {
    lo = std::stod(text.substr(0, colon));
    const std::string h = text.substr(colon + 1);
    hi = h.empty() ? (mode == ThresholdMode::Quantile ? 1.0 : INFINITY) : std::stod(h);
  } catch (const std::logic_error&) {
    throw UsageError("threshold range '" + text + "' is not numeric");
  }
  ThresholdRange r{lo, hi, mode};
  r.validate();
  return r;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t p = 0;
  while (p <= s.size()) {
    const std::size_t q = s.find(',', p);
    const std::string item = s.substr(p, q == std::string::npos ? std::string::npos : q - p);
    if (!item.empty()) out.push_back(item);
    if (q == std::string::npos) break;
    p = q + 1;
  }
  return out;
}

// ---- flag groups -----------------------------------------------------------------------

struct CommonFlags {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;

  void add(CLI::App* sub) {
    sub->add_option("--seed", seed, "Root seed; stages use derived sub-streams");
    sub->add_option("--out", out, "Output directory (default: $AMDM_OUTPUT_DIR or ./out)");
    sub->add_option("--config", config, "key = value file; flags on the command line win")->check(CLI::ExistingFile);
  }
};

struct MaskFlags {
  std::string wavelet = "haar";
  int levels = 2;
  std::size_t n_high = 2;
  std::string mode = "quantile";
  std::string low_range = "0.7:1";
  std::string high_ranges;  // empty: evenly spaced quantile defaults

  void add(CLI::App* sub) {
    sub->add_option("--wavelet", wavelet, "Wavelet family")->check(CLI::IsMember({"haar", "db4"}));
    sub->add_option("--levels", levels, "Decomposition levels")->check(CLI::Range(1, 16));
    sub->add_option("--n-high", n_high, "Number of high-frequency masks")->check(CLI::Range(1, 16));
    sub->add_option("--threshold-mode", mode, "Threshold interpretation")->check(CLI::IsMember({"quantile", "absolute"}));
    sub->add_option("--low-range", low_range, "Low-frequency threshold range lo:hi");
    sub->add_option("--high-ranges", high_ranges, "Comma-separated lo:hi ranges, one per high mask");
  }

  WaveletSpec spec() const { return {parse_wavelet_family(wavelet), levels}; }

  MaskRanges ranges() const {
    const ThresholdMode m = mode == "quantile" ? ThresholdMode::Quantile : ThresholdMode::Absolute;
    MaskRanges r = MaskRanges::defaults(n_high);
    if (m == ThresholdMode::Absolute && high_ranges.empty())
      throw UsageError("--threshold-mode absolute needs explicit --low-range and --high-ranges");
    r.low = parse_range(low_range, m);
    if (!high_ranges.empty()) {
      r.highs.clear();
      for (const auto& item : split_list(high_ranges)) r.highs.push_back(parse_range(item, m));
      if (r.highs.size() != n_high)
        throw UsageError("--high-ranges lists " + std::to_string(r.highs.size()) + " ranges but --n-high is " +
                         std::to_string(n_high));
    }
    return r;
  }
};

struct ScheduleFlags {
  double sigma_min = 0.01;
  double sigma_max = 378.0;

  void add(CLI::App* sub) {
    sub->add_option("--sigma-min", sigma_min, "Smallest noise scale");
    sub->add_option("--sigma-max", sigma_max, "Largest noise scale");
  }
};

struct ReconFlags {
  MaskFlags mask;
  ScheduleFlags schedule;
  double mu = 0.0;
  std::size_t T = 200;
  int M = 1;
  double snr = 0.16;
  std::string recombine = "mean";
  std::string dc_mode = "per-iteration";
  std::string layout_d1 = "middle";
  std::string layout_d2 = "before";

  void add(CLI::App* sub) {
    mask.add(sub);
    schedule.add(sub);
    sub->add_option("--mu", mu, "Data-consistency weight (0 = hard replacement)");
    sub->add_option("--T", T, "Outer iterations")->check(CLI::PositiveNumber);
    sub->add_option("--M", M, "Corrector steps per predictor step")->check(CLI::PositiveNumber);
    sub->add_option("--snr", snr, "Corrector signal-to-noise ratio");
    sub->add_option("--recombine", recombine, "Channel collapse")->check(CLI::IsMember({"mean", "mask-weighted"}));
    sub->add_option("--dc-mode", dc_mode, "When data consistency runs")
        ->check(CLI::IsMember({"per-iteration", "once-at-end"}));
    sub->add_option("--layout-d1", layout_d1, "k_L slot for the first model")
        ->check(CLI::IsMember({"before", "middle", "after"}));
    sub->add_option("--layout-d2", layout_d2, "k_L slot for the second model")
        ->check(CLI::IsMember({"before", "middle", "after"}));
  }

  ReconConfig build(std::uint64_t seed) const {
    ReconConfig c;
    c.mu = mu;
    c.outer_steps = T;
    c.corrector_loops = M;
    c.snr = snr;
    c.schedule = {schedule.sigma_min, schedule.sigma_max, 2 * T};
    c.wavelet = mask.spec();
    c.mask_ranges = mask.ranges();
    c.layout_d1 = {parse_low_slot(layout_d1), mask.n_high};
    c.layout_d2 = {parse_low_slot(layout_d2), mask.n_high};
    c.recombine = parse_recombine(recombine);
    c.dc_mode = parse_dc_mode(dc_mode);
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct SourceFlags {
  std::string phantom = "shepp-logan";
  std::size_t size = 64;
  std::string pattern = "random2d";
  double R = 4.0;
  double center_fraction = 0.04;
  double noise_std = 0.0;
  std::string image, mask, measurement;

  void add(CLI::App* sub) {
    sub->add_option("--phantom", phantom, "Synthetic ground truth")
        ->check(CLI::IsMember({"shepp-logan", "gaussian-blobs", "smooth-random"}));
    sub->add_option("--size", size, "Phantom side length")->check(CLI::Range(16, 4096));
    sub->add_option("--pattern", pattern, "Undersampling pattern")->check(CLI::IsMember({"random2d", "poisson", "radial"}));
    sub->add_option("--R", R, "Target acceleration factor");
    sub->add_option("--center-fraction", center_fraction, "Fully sampled centre, fraction of each side");
    sub->add_option("--noise-std", noise_std, "Complex Gaussian measurement noise");
    sub->add_option("--image", image, "Reference image (KSP1) instead of a phantom")->check(CLI::ExistingFile);
    sub->add_option("--mask", mask, "Sampling mask (P5 or KSP1) instead of a generated pattern")
        ->check(CLI::ExistingFile);
    sub->add_option("--measurement", measurement, "Undersampled k-space (KSP1); needs --mask")->check(CLI::ExistingFile);
  }

  Scenario scenario(std::uint64_t seed) const {
    return {parse_phantom_kind(phantom), size, parse_pattern_kind(pattern), R, center_fraction, noise_std, seed};
  }
};

struct ModelFlags {
  bool analytic = false;
  double base_var = 1e-4;
  std::string model, model_d1, model_d2;

  void add(CLI::App* sub) {
    sub->add_flag("--analytic-score", analytic, "Use the Gaussian surrogate centred on the reference k-space");
    sub->add_option("--base-var", base_var, "Surrogate variance")->check(CLI::PositiveNumber);
    sub->add_option("--model", model, "One SCM1 checkpoint shared by both cascade stages")->check(CLI::ExistingFile);
    sub->add_option("--model-d1", model_d1, "SCM1 checkpoint for the first stage")->check(CLI::ExistingFile);
    sub->add_option("--model-d2", model_d2, "SCM1 checkpoint for the second stage")->check(CLI::ExistingFile);
  }

  bool any() const { return analytic || !model.empty() || !model_d1.empty() || !model_d2.empty(); }

  void check() const {
    const int sources = analytic + !model.empty() + (!model_d1.empty() || !model_d2.empty());
    if (sources != 1) throw UsageError("choose exactly one score source: --analytic-score, --model, or --model-d1 with --model-d2");
    if (model_d1.empty() != model_d2.empty()) throw UsageError("--model-d1 and --model-d2 go together");
  }
};

struct Acquired {
  Measurement meas;
  std::optional<ComplexGrid> reference;
};

Acquired acquire_inputs(const SourceFlags& f, std::uint64_t seed, Run& run) {
  if (!f.measurement.empty() && f.mask.empty()) throw UsageError("--measurement needs --mask");
  return run.stage("acquire", [&] {
    Acquired a;
    const std::uint64_t data = derive_seed(seed, "data");
    if (!f.measurement.empty()) {
      run.input("measurement", f.measurement);
      run.input("mask", f.mask);
      a.meas = {io::read_ksp1_single(f.measurement), io::read_sampling_mask(f.mask), f.noise_std};
      a.meas.validate();
      if (!f.image.empty()) {
        run.input("image", f.image);
        a.reference = io::read_ksp1_single(f.image);
      }
      return a;
    }
    ComplexGrid img;
    if (!f.image.empty()) {
      run.input("image", f.image);
      img = io::read_ksp1_single(f.image);
    } else {
      img = make_phantom(parse_phantom_kind(f.phantom), f.size, derive_seed(data, "phantom"));
    }
    SamplingMask mask;
    if (!f.mask.empty()) {
      run.input("mask", f.mask);
      mask = io::read_sampling_mask(f.mask);
    } else {
      mask = generate_pattern({parse_pattern_kind(f.pattern), f.R, f.center_fraction, derive_seed(data, "pattern")},
                              img.height(), img.width());
    }
    a.meas = apply_sampling(fft2c(img), mask, f.noise_std, derive_seed(seed, "noise"));
    a.reference = std::move(img);
    return a;
  });
}

std::pair<std::shared_ptr<ScoreModel>, std::shared_ptr<ScoreModel>> load_models(const ModelFlags& f, const ReconConfig& cfg,
                                                                                const std::optional<ComplexGrid>& ref,
                                                                                Run& run) {
  f.check();
  if (f.analytic && !ref) throw UsageError("--analytic-score needs a reference image (--image or a synthetic phantom)");
  return run.stage("model", [&] {
    std::pair<std::shared_ptr<ScoreModel>, std::shared_ptr<ScoreModel>> m;
    if (f.analytic) {
      m.first = analytic_gaussian_score(surrogate_mean(*ref, cfg.layout_d1), f.base_var);
      m.second = analytic_gaussian_score(surrogate_mean(*ref, cfg.layout_d2), f.base_var);
    } else if (!f.model.empty()) {
      run.input("model", f.model);
      m.first = m.second = load_checkpoint(f.model);
    } else {
      run.input("model_d1", f.model_d1);
      run.input("model_d2", f.model_d2);
      m.first = load_checkpoint(f.model_d1);
      m.second = load_checkpoint(f.model_d2);
    }
    return m;
  });
}

void note_seeds(Run& run, std::uint64_t seed) {
  for (const char* s : {"data", "noise", "init", "sampler"})
    run.note(std::string("seed_") + s, std::to_string(derive_seed(seed, s)));
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsRow>>& rows) {
  std::string out = "method,psnr,ssim,mse,cell\n";
  for (const auto& [name, m] : rows)
    out += name + "," + io::fmt_double(m.psnr) + "," + io::fmt_double(m.ssim) + "," + io::fmt_double(m.mse) + "," +
           m.cell() + "\n";
  return out;
}

void require_finite(const ComplexGrid& g, const std::string& what) {
  if (!g.all_finite()) throw NumericalError(what + " contains non-finite values");
}

// ---- subcommands ------------------------------------------------------------------------

struct GenData {
  CommonFlags common;
  std::string kind = "shepp-logan";
  std::size_t count = 100;
  std::size_t size = 64;
  bool flips = false, rotations = false;

  void add(CLI::App* sub) {
    common.add(sub);
    sub->add_option("--kind", kind, "Phantom family")->check(CLI::IsMember({"shepp-logan", "gaussian-blobs", "smooth-random"}));
    sub->add_option("--count", count, "Number of base items")->check(CLI::PositiveNumber);
    sub->add_option("--size", size, "Side length")->check(CLI::Range(16, 4096));
    sub->add_flag("--flips", flips, "Add horizontal and vertical flips");
    sub->add_flag("--rotations", rotations, "Add 90/180/270 degree rotations");
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    note_seeds(run, common.seed);
    run.ensure_dir();
    Dataset ds = run.stage("generate", [&] {
      Dataset d = make_dataset(parse_phantom_kind(kind), count, size, derive_seed(common.seed, "data"));
      return (flips || rotations) ? augment(d, flips, rotations) : d;
    });
    run.stage("write", [&] { save_dataset(run.dir(), ds); });
    run.output("manifest.txt");
    run.note("items", std::to_string(ds.items.size()));
    run.write_manifest();
    std::cout << "wrote " << ds.items.size() << " items to " << run.dir().string() << "\n";
    return 0;
  }
};

struct GenMask {
  CommonFlags common;
  MaskFlags mask;
  std::string input;
  bool is_image = false;

  void add(CLI::App* sub) {
    common.add(sub);
    mask.add(sub);
    sub->add_option("--input", input, "k-space file (KSP1, first channel)")->required()->check(CLI::ExistingFile);
    sub->add_flag("--image", is_image, "Input is an image; transform it first");
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    run.input("kspace", input);
    const MaskRanges ranges = mask.ranges();
    run.ensure_dir();
    const ComplexGrid k = run.stage("read", [&] {
      ComplexGrid g = io::read_ksp1(input).front();
      return is_image ? fft2c(g) : g;
    });
    const auto [set, res] = run.stage("masks", [&] {
      return std::make_pair(generate_masks(k, mask.spec(), ranges), frequency_residuals(k, mask.spec()));
    });
    auto as_complex = [](const RealGrid& r) {
      ComplexGrid g(r.height(), r.width());
      for (std::size_t i = 0; i < r.size(); ++i) g[i] = r[i];
      return g;
    };
    run.stage("write", [&] {
      io::write_p5(run.output("mask_low.pgm"), set.low.grid);
      for (std::size_t i = 0; i < set.highs.size(); ++i)
        io::write_p5(run.output("mask_high" + std::to_string(i + 1) + ".pgm"), set.highs[i].grid);
      io::write_ksp1(run.output("residual_low.ksp"), as_complex(res.low_res));
      io::write_ksp1(run.output("residual_high.ksp"), as_complex(res.high_res));
    });
    std::cout << "M_L: " << set.low.count() << " entries\n";
    for (std::size_t i = 0; i < set.highs.size(); ++i)
      std::cout << "M_H" << i + 1 << ": " << set.highs[i].count() << " entries\n";
    for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
    run.write_manifest();
    return 0;
  }
};

struct GenPattern {
  CommonFlags common;
  std::string pattern = "random2d";
  double R = 4.0;
  double center_fraction = 0.04;
  std::size_t size = 64, height = 0, width = 0;

  void add(CLI::App* sub) {
    common.add(sub);
    sub->add_option("--pattern", pattern, "Pattern family")->check(CLI::IsMember({"random2d", "poisson", "radial"}));
    sub->add_option("--R", R, "Target acceleration factor");
    sub->add_option("--center-fraction", center_fraction, "Fully sampled centre, fraction of each side");
    sub->add_option("--size", size, "Square side length");
    sub->add_option("--height", height, "Rows (overrides --size)");
    sub->add_option("--width", width, "Columns (overrides --size)");
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    note_seeds(run, common.seed);
    run.ensure_dir();
    const std::size_t h = height ? height : size, w = width ? width : size;
    const PatternResult p = run.stage("generate", [&] {
      return generate_pattern_detailed(
          {parse_pattern_kind(pattern), R, center_fraction, derive_seed(derive_seed(common.seed, "data"), "pattern")}, h, w);
    });
    run.stage("write", [&] { io::write_p5(run.output("pattern.pgm"), p.mask.grid()); });
    const double af = static_cast<double>(h * w) / static_cast<double>(popcount(p.mask.grid()));
    run.note("achieved_R", io::fmt_double(af));
    run.note("pattern_parameter", io::fmt_double(p.parameter));
    run.write_manifest();
    std::cout << pattern << " pattern " << h << "x" << w << ": achieved R " << af << "\n";
    return 0;
  }
};

struct Train {
  CommonFlags common;
  MaskFlags mask;
  ScheduleFlags schedule;
  std::string data;
  std::string kind = "gaussian-blobs";
  std::size_t count = 200, size = 32;
  std::string layout = "middle";
  std::size_t hidden = 16;
  std::size_t steps = 2000, batch = 2;
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999;

  void add(CLI::App* sub) {
    common.add(sub);
    mask.add(sub);
    schedule.add(sub);
    sub->add_option("--data", data, "Dataset directory from gen-data (otherwise generated)")->check(CLI::ExistingDirectory);
    sub->add_option("--kind", kind, "Phantom family when generating")
        ->check(CLI::IsMember({"shepp-logan", "gaussian-blobs", "smooth-random"}));
    sub->add_option("--count", count, "Items when generating")->check(CLI::PositiveNumber);
    sub->add_option("--size", size, "Side length when generating")->check(CLI::Range(16, 4096));
    sub->add_option("--layout", layout, "k_L slot of the stacked tensors")->check(CLI::IsMember({"before", "middle", "after"}));
    sub->add_option("--hidden", hidden, "Hidden width")->check(CLI::PositiveNumber);
    sub->add_option("--steps", steps, "Adam steps");
    sub->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--beta1", beta1, "Adam beta1");
    sub->add_option("--beta2", beta2, "Adam beta2");
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    note_seeds(run, common.seed);
    const MaskRanges ranges = mask.ranges();
    const ChannelLayout lay{parse_low_slot(layout), mask.n_high};
    run.ensure_dir();
    const Dataset ds = run.stage("data", [&] {
      if (!data.empty()) {
        run.input("data", data);
        return load_dataset(data);
      }
      return make_dataset(parse_phantom_kind(kind), count, size, derive_seed(common.seed, "data"));
    });
    const auto tensors = run.stage("stack", [&] { return stacked_training_set(ds, mask.spec(), ranges, lay); });
    TinyDenoiser model(lay.planes(), hidden, derive_seed(common.seed, "init"));
    TrainingConfig tc;
    tc.learning_rate = lr;
    tc.beta1 = beta1;
    tc.beta2 = beta2;
    tc.batch_size = batch;
    tc.steps = steps;
    const NoiseSchedule sched{schedule.sigma_min, schedule.sigma_max, 1000};
    const TrainingResult tr =
        run.stage("train", [&] { return train(model, tensors, tc, sched, derive_seed(common.seed, "noise")); });
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < tr.loss_trace.size(); ++i) csv += std::to_string(i) + "," + io::fmt_double(tr.loss_trace[i]) + "\n";
    run.stage("write", [&] { save_checkpoint(run.output("model.scm1"), model); });
    run.write("loss.csv", csv);
    if (!tr.loss_trace.empty()) {
      run.note("loss_first", io::fmt_double(tr.loss_trace.front()));
      run.note("loss_last", io::fmt_double(tr.loss_trace.back()));
      std::cout << "loss " << tr.loss_trace.front() << " -> " << tr.loss_trace.back() << " over " << steps << " steps\n";
    }
    run.write_manifest();
    return 0;
  }
};

struct Recon {
  CommonFlags common;
  SourceFlags source;
  ReconFlags recon;
  ModelFlags models;

  void add(CLI::App* sub) {
    common.add(sub);
    source.add(sub);
    recon.add(sub);
    models.add(sub);
  }

  struct Output {
    ReconResult result;
    Acquired in;
  };

  Output execute(Run& run) {
    note_seeds(run, common.seed);
    const ReconConfig cfg = recon.build(common.seed);
    models.check();
    Acquired in = acquire_inputs(source, common.seed, run);
    const auto [d1, d2] = load_models(models, cfg, in.reference, run);
    ReconResult res = run.stage("reconstruct", [&] { return reconstruct(in.meas, *d1, *d2, cfg, in.reference); });
    require_finite(res.image, "reconstructed image");
    return {std::move(res), std::move(in)};
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    run.ensure_dir();
    const Output o = execute(run);
    const ComplexGrid zf = zero_filled(o.in.meas);
    run.stage("write", [&] {
      io::write_ksp1(run.output("recon_image.ksp"), o.result.image);
      io::write_ksp1(run.output("recon_kspace.ksp"), o.result.k_final);
      io::write_ksp1(run.output("zero_filled.ksp"), zf);
    });
    if (o.in.reference) {
      const MetricsRow z = evaluate(zf, *o.in.reference), a = evaluate(o.result.image, *o.in.reference);
      run.write("metrics.csv", metrics_csv({{"zero-filled", z}, {"amdm", a}}));
      std::cout << "zero-filled " << z.cell() << "\namdm        " << a.cell() << "\n";
    }
    run.write_manifest();
    return 0;
  }
};

struct Convergence : Recon {
  int run(CLI::App* sub) {
    Run run(sub, common.out);
    run.ensure_dir();
    if (!source.measurement.empty() && source.image.empty())
      throw UsageError("convergence needs a reference image (--image) alongside --measurement");
    const Output o = execute(run);
    const auto& trace = o.result.state.trace;
    run.write("convergence.csv", metrics_trace_csv(trace));
    if (!trace.empty()) {
      const auto& q = trace[std::max<std::size_t>(trace.size() / 4, 1) - 1];
      std::cout << "iteration 1: " << trace.front().row.cell() << "\niteration " << q.iteration << ": " << q.row.cell()
                << "\niteration " << trace.back().iteration << ": " << trace.back().row.cell() << "\n";
    }
    run.write_manifest();
    return 0;
  }
};

struct Eval {
  CommonFlags common;
  std::string recon_path, reference_path, append, label = "amdm";

  void add(CLI::App* sub) {
    common.add(sub);
    sub->add_option("--recon", recon_path, "Reconstructed image (KSP1)")->required()->check(CLI::ExistingFile);
    sub->add_option("--reference", reference_path, "Reference image (KSP1)")->required()->check(CLI::ExistingFile);
    sub->add_option("--append", append, "CSV to append a label,cell row to");
    sub->add_option("--label", label, "Row label for --append");
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    run.input("recon", recon_path);
    run.input("reference", reference_path);
    const MetricsRow m = run.stage("evaluate", [&] {
      return evaluate(io::read_ksp1_single(recon_path), io::read_ksp1_single(reference_path));
    });
    std::cout << m.cell() << "\n";
    if (!append.empty()) {
      run.stage("append", [&] {
        std::string text = fs::exists(append) ? io::read_file(append) : "label,cell\n";
        text += label + "," + m.cell() + "\n";
        io::write_file_atomic(append, text);
      });
      run.ensure_dir();
      run.write_manifest();
    }
    return 0;
  }
};

struct Sweep {
  CommonFlags common;
  SourceFlags source;
  ReconFlags recon;
  double base_var = 1e-4;
  std::string patterns = "random2d", rates = "4", seeds, channels;
  std::string score = "analytic";
  std::size_t train_items = 40, train_steps = 400, hidden = 8;
  double train_lr = 1e-3;

  void add(CLI::App* sub) {
    common.add(sub);
    source.add(sub);
    recon.add(sub);
    sub->add_option("--base-var", base_var, "Surrogate variance")->check(CLI::PositiveNumber);
    sub->add_option("--patterns", patterns, "Comma-separated pattern families");
    sub->add_option("--rates", rates, "Comma-separated acceleration factors");
    sub->add_option("--seeds", seeds, "Comma-separated seeds (default: --seed)");
    sub->add_option("--channels", channels, "Comma-separated channel counts for the ablation, e.g. 4,6,8");
    sub->add_option("--score", score, "Score source for the ablation")->check(CLI::IsMember({"analytic", "trained"}));
    sub->add_option("--train-items", train_items, "Training items per model (trained ablation)");
    sub->add_option("--train-steps", train_steps, "Adam steps per model (trained ablation)");
    sub->add_option("--train-lr", train_lr, "Learning rate (trained ablation)");
    sub->add_option("--hidden", hidden, "Hidden width (trained ablation)");
  }

  int run(CLI::App* sub) {
    Run run(sub, common.out);
    if (!source.image.empty() || !source.mask.empty() || !source.measurement.empty())
      throw UsageError("sweep runs on synthetic phantoms; --image, --mask and --measurement are not accepted");
    const ReconConfig base = recon.build(common.seed);
    std::vector<std::uint64_t> seed_list;
    std::vector<double> rate_list;
    std::vector<PatternKind> pattern_list;
    std::vector<std::size_t> channel_list;
    try {
      for (const auto& s : split_list(seeds)) seed_list.push_back(std::stoull(s));
      for (const auto& s : split_list(rates)) rate_list.push_back(std::stod(s));
      for (const auto& s : split_list(channels)) channel_list.push_back(std::stoul(s));
    } catch (const std::logic_error&) {
      throw UsageError("--seeds, --rates and --channels take comma-separated numbers");
    }
    for (const auto& s : split_list(patterns)) {
      try {
        pattern_list.push_back(parse_pattern_kind(s));
      } catch (const ValidationError& e) {
        throw UsageError(e.what());
      }
    }
    for (std::size_t c : channel_list)
      if (c < 4 || c % 2) throw UsageError("--channels entries must be even and at least 4");
    if (seed_list.empty()) seed_list.push_back(common.seed);
    if (rate_list.empty() || pattern_list.empty()) throw UsageError("--patterns and --rates must not be empty");
    run.ensure_dir();

    std::vector<SweepRow> rows;
    run.stage("sweep", [&] {
      for (PatternKind p : pattern_list)
        for (double r : rate_list)
          for (std::uint64_t s : seed_list) {
            Scenario sc = source.scenario(s);
            sc.pattern = p;
            sc.R = r;
            const TrialResult t = run_trial(sc, base, base_var);
            require_finite(t.run.image, "reconstructed image");
            rows.push_back({p, r, s, t.zero_filled, t.recon});
            std::cout << to_string(p) << " R=" << r << " seed " << s << ": zero-filled " << t.zero_filled.cell()
                      << ", amdm " << t.recon.cell() << "\n";
          }
    });
    run.write("sweep.csv", sweep_csv(rows));

    if (!channel_list.empty()) {
      Scenario sc = source.scenario(seed_list.front());
      sc.pattern = pattern_list.front();
      sc.R = rate_list.front();
      AblationOptions opt;
      opt.trained = score == "trained";
      opt.base_var = base_var;
      opt.train_items = train_items;
      opt.hidden = hidden;
      opt.training.steps = train_steps;
      opt.training.learning_rate = train_lr;
      const auto table = run.stage("ablation", [&] { return channel_ablation(sc, base, channel_list, opt); });
      for (const auto& r : table)
        if (!std::isfinite(r.metrics.psnr)) throw StageError("ablation", "non-finite metrics");
      run.write("ablation.csv", ablation_csv(table));
      run.write("ablation.txt", ablation_text(table));
      run.note("ablation_best_channels", std::to_string(best_channels(table)));
      std::cout << "\n" << ablation_text(table) << "best: " << best_channels(table) << " channels\n";
    }
    run.write_manifest();
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-mask k-space diffusion MRI reconstruction", "amdm"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenData gen_data;
  GenMask gen_mask;
  GenPattern gen_pattern;
  Train train_cmd;
  Recon recon;
  Eval eval;
  Sweep sweep;
  Convergence convergence;

  struct Entry {
    CLI::App* sub;
    std::function<int(CLI::App*)> run;
    std::string* config;
  };
  std::vector<Entry> entries;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    entries.push_back({sub, [&cmd](CLI::App* s) { return cmd.run(s); }, &cmd.common.config});
  };
  reg("gen-data", "Build a synthetic phantom dataset", gen_data);
  reg("gen-mask", "Adaptive masks and residual maps for a k-space file", gen_mask);
  reg("gen-pattern", "Generate an undersampling mask", gen_pattern);
  reg("train", "Train a tiny score model with denoising score matching", train_cmd);
  reg("recon", "Reconstruct undersampled k-space", recon);
  reg("eval", "Compare an image to a reference", eval);
  reg("sweep", "Recon over patterns, rates and channel counts", sweep);
  reg("convergence", "Per-iteration metrics of one reconstruction", convergence);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (const auto& e : entries) {
    if (!e.sub->parsed()) continue;
    const std::string name = e.sub->get_name();
    try {
      apply_config(e.sub, *e.config);
      return e.run(e.sub);
    } catch (const UsageError& err) {
      std::cerr << "amdm " << name << ": " << err.what() << "\n\n" << e.sub->help();
      return 2;
    } catch (const ValidationError& err) {  // raised while resolving flags, before any stage
      std::cerr << "amdm " << name << ": " << err.what() << "\n\n" << e.sub->help();
      return 2;
    } catch (const StageError& err) {
      std::cerr << "amdm " << name << ": error in " << err.what() << "\n";
      return 1;
    } catch (const std::exception& err) {
      std::cerr << "amdm " << name << ": error: " << err.what() << "\n";
      return 1;
    }
  }
  return 2;
}
