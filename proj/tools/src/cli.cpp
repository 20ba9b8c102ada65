#include "kspdiff/cli.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "kspdiff/encoding.hpp"
#include "kspdiff/error.hpp"
#include "kspdiff/manifest.hpp"
#include "kspdiff/metrics.hpp"
#include "kspdiff/rng.hpp"
#include "kspdiff/stats.hpp"
#include "kspdiff/tensor_io.hpp"

namespace kspdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Tag : std::uint64_t { kTagPhantom = 11, kTagSens, kTagMask, kTagNoise, kTagRecon };

constexpr const char* kUndersampleIndex = "undersample.json";
constexpr const char* kReconIndex = "index.json";

class UsageError : public Error {
 public:
  using Error::Error;
};

// ------------------------------------------------------------------ files

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << s;
  if (!os) throw IoError("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string slice_name(std::size_t i) {
  std::ostringstream os;
  os << "slice_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

/// Creates `dir`; an existing non-empty directory needs --force (which clears it)
/// unless `reuse` is set.
void prepare_out(const fs::path& dir, bool force, bool reuse = false) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("output path is not a directory: " + dir.string());
  if (fs::exists(dir) && !fs::is_empty(dir) && !reuse) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

fs::path default_out(const std::string& name) {
  const char* root = std::getenv(kOutRootEnv);
  return fs::path(root && *root ? root : "kspdiff_runs") / name;
}

fs::path resolve_out(const std::string& flag, const std::string& name) {
  return flag.empty() ? default_out(name) : fs::path(flag);
}

// ----------------------------------------------------------- phantom data

struct PhantomSet {
  DatasetManifest manifest;
  SensitivityMaps sens;
  std::vector<ComplexTensor> images;
};

PhantomSet read_phantoms(const fs::path& root) {
  PhantomSet p;
  p.manifest = DatasetManifest::load(root / kManifestName);
  p.manifest.verify_files(root);
  p.sens.maps = read_tensor(root / p.manifest.sensitivities);
  for (const auto& s : p.manifest.slices) p.images.push_back(read_tensor(root / s));
  return p;
}

std::string stem_of(const std::string& rel) { return fs::path(rel).stem().string(); }

}  // namespace

// ------------------------------------------------------------- RunConfig

void RunConfig::validate() const {
  try {
    train.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (!(noise_std >= 0.0)) throw UsageError("noise_std must be non-negative");
  if (n_boot < 2) throw UsageError("n_boot must be at least 2");
  if (checkpoint_every < 0) throw UsageError("checkpoint_every must be non-negative");
}

json RunConfig::to_json() const {
  return {{"dataset", dataset},       {"noise_std", noise_std},
          {"holdout", holdout},       {"n_boot", n_boot},
          {"checkpoint_every", checkpoint_every}, {"train", train.to_json()}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.dataset = j.value("dataset", c.dataset);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.holdout = j.value("holdout", c.holdout);
    c.n_boot = j.value("n_boot", c.n_boot);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("bad config: ") + e.what());
  }
  return c;
}

SamplingMask slice_mask(std::size_t width, double R, double center_fraction, std::uint64_t seed, std::size_t i) {
  return make_random_mask(width, R, center_fraction, derive_seed(seed, {kTagMask, i}));
}

Acquisition load_acquisition(const fs::path& dir, const RunConfig& cfg) {
  Acquisition a;
  if (fs::exists(dir / kUndersampleIndex)) {
    const json idx = read_json(dir / kUndersampleIndex);
    const PhantomSet ph = read_phantoms(idx.at("dataset").get<std::string>());
    a.sens = ph.sens;
    const auto names = idx.at("slices").get<std::vector<std::string>>();
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ph.manifest.slices.size(); ++i) pos[stem_of(ph.manifest.slices[i])] = i;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto it = pos.find(names[i]);
      if (it == pos.end()) throw IoError("undersampled slice " + names[i] + " is not in the phantom dataset");
      SliceData s;
      s.id = i;
      s.measured = read_tensor(dir / "kspace" / (names[i] + ".cksp"));
      s.omega = mask_from_json(read_json(dir / "masks" / (names[i] + ".json")));
      a.slices.push_back(std::move(s));
      a.truths.push_back(ph.images[it->second]);
      a.names.push_back(names[i]);
    }
    return a;
  }
  if (!fs::exists(dir / kManifestName))
    throw IoError("no dataset at " + dir.string() + " (expected manifest.json or undersample.json)");
  PhantomSet ph = read_phantoms(dir);
  a.sens = ph.sens;
  const TrainConfig& t = cfg.train;
  for (std::size_t i = 0; i < ph.images.size(); ++i) {
    const auto omega = slice_mask(ph.sens.cols(), t.R, t.center_fraction, t.seed, i);
    a.slices.push_back(make_slice(i, ph.images[i], ph.sens, omega, cfg.noise_std, derive_seed(t.seed, {kTagNoise, i})));
    a.truths.push_back(std::move(ph.images[i]));
    a.names.push_back(stem_of(ph.manifest.slices[i]));
  }
  return a;
}

namespace {

// -------------------------------------------------------------- commands

struct Split {
  std::vector<std::size_t> train, eval;
};

Split split_of(const Acquisition& a, std::size_t holdout) {
  const std::size_t n = a.slices.size();
  if (holdout >= n)
    throw UsageError("holdout " + std::to_string(holdout) + " leaves no training slices out of " + std::to_string(n));
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i + holdout < n ? s.train : s.eval).push_back(i);
  if (s.eval.empty()) s.eval = s.train;
  return s;
}

void cmd_phantom(std::size_t n, std::size_t size, std::size_t coils, std::size_t ellipses, std::uint64_t seed,
                 const fs::path& out, bool force, std::ostream& os) {
  if (size < 16) throw UsageError("--size must be at least 16");
  if (n == 0) throw UsageError("--n must be positive");
  if (coils == 0) throw UsageError("--coils must be positive");
  if (ellipses == 0) throw UsageError("--ellipses must be positive");
  prepare_out(out, force);
  fs::create_directories(out / "slices");
  DatasetManifest m;
  m.seed = seed;
  m.phantom = {size, size, coils, ellipses};
  m.sensitivities = "sensitivities.cksp";
  write_tensor(generate_sensitivities(coils, size, size, derive_seed(seed, {kTagSens})).maps, out / m.sensitivities);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string rel = "slices/" + slice_name(i) + ".cksp";
    write_tensor(generate_phantom(size, size, ellipses, derive_seed(seed, {kTagPhantom, i})), out / rel);
    m.slices.push_back(rel);
  }
  m.created = utc_timestamp();
  m.save(out / kManifestName);
  os << "wrote " << n << " slices to " << out.string() << "\n";
}

void cmd_undersample(const fs::path& data, double R, double cf, double noise, std::uint64_t seed, const fs::path& out,
                     bool force, std::ostream& os) {
  if (!(R >= 1.0)) throw UsageError("--R must be >= 1");
  if (!(cf > 0.0 && cf < 1.0)) throw UsageError("--cf must lie in (0, 1)");
  if (!(noise >= 0.0)) throw UsageError("--noise must be non-negative");
  if (!fs::exists(data / kManifestName)) throw IoError("missing dataset: " + (data / kManifestName).string());
  const PhantomSet ph = read_phantoms(data);
  prepare_out(out, force);
  fs::create_directories(out / "masks");
  fs::create_directories(out / "kspace");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < ph.images.size(); ++i) {
    const std::string name = stem_of(ph.manifest.slices[i]);
    const auto omega = slice_mask(ph.sens.cols(), R, cf, seed, i);
    const auto s = make_slice(i, ph.images[i], ph.sens, omega, noise, derive_seed(seed, {kTagNoise, i}));
    write_json(out / "masks" / (name + ".json"), to_json(omega));
    write_tensor(s.measured, out / "kspace" / (name + ".cksp"));
    names.push_back(name);
  }
  write_json(out / kUndersampleIndex, {{"dataset", fs::absolute(data).lexically_normal().string()},
                                       {"R", R},
                                       {"center_fraction", cf},
                                       {"noise_std", noise},
                                       {"seed", seed},
                                       {"slices", names}});
  os << "undersampled " << names.size() << " slices at R=" << R << " into " << out.string() << "\n";
}

fs::path last_checkpoint(const fs::path& run) { return run / "checkpoints" / "last"; }

void save_atomically(const Trainer& tr, const fs::path& run) {
  const fs::path tmp = run / "checkpoints" / "incoming";
  fs::remove_all(tmp);
  tr.save(tmp);
  fs::remove_all(last_checkpoint(run));
  fs::rename(tmp, last_checkpoint(run));
}

// Keeps header and rows with step < keep_below.
void truncate_log(const fs::path& log, std::int64_t keep_below) {
  std::ifstream is(log);
  std::string line, kept;
  bool header = true;
  while (std::getline(is, line)) {
    if (header || (!line.empty() && std::stoll(line.substr(0, line.find(','))) < keep_below)) kept += line + "\n";
    header = false;
  }
  write_text(log, kept);
}

void do_train(const RunConfig& cfg, const fs::path& run, bool force, bool resume, std::ostream& os) {
  cfg.validate();
  if (cfg.dataset.empty()) throw UsageError("no dataset given (--data or config 'dataset')");
  const Acquisition acq = load_acquisition(cfg.dataset, cfg);
  const Split split = split_of(acq, cfg.holdout);
  if (resume && !fs::exists(last_checkpoint(run) / "trainer.json"))
    throw UsageError("--resume: no checkpoint under " + run.string());
  prepare_out(run, force, resume);
  fs::create_directories(run / "checkpoints");
  fs::create_directories(run / "logs");
  write_json(run / "config.json", cfg.to_json());

  std::vector<SliceData> data;
  for (auto i : split.train) data.push_back(acq.slices[i]);
  Trainer tr(cfg.train, acq.sens);
  const fs::path log = run / "logs" / "metrics.csv";
  if (resume) {
    tr.load(last_checkpoint(run));
    truncate_log(log, tr.step());
  } else {
    write_text(log, LossReport::csv_header() + "\n");
  }
  std::ofstream lf(log, std::ios::app);
  const std::int64_t end = tr.planned_steps(data.size());
  const std::int64_t every = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : tr.steps_per_epoch(data.size());
  std::vector<SliceData> batch;
  while (tr.step() < end) {
    batch.clear();
    for (auto i : tr.batch_indices(tr.step(), data.size())) batch.push_back(data[i]);
    LossReport r;
    try {
      r = tr.train_step(batch);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + "; last good checkpoint kept at " + last_checkpoint(run).string());
    }
    lf << r.csv_row() << "\n";
    if (tr.step() % every == 0 || tr.step() == end) {
      lf.flush();
      save_atomically(tr, run);
    }
  }
  if (!fs::exists(last_checkpoint(run))) save_atomically(tr, run);
  os << "trained " << tr.step() << " steps; run directory " << run.string() << "\n";
}

struct ReconIndex {
  std::string method;
  std::string dataset;
  std::vector<std::string> names;
  std::vector<std::uint64_t> ids;
};

void write_recon_index(const fs::path& dir, const ReconIndex& ix) {
  write_json(dir / kReconIndex,
             {{"method", ix.method}, {"dataset", ix.dataset}, {"slices", ix.names}, {"ids", ix.ids}});
}

void do_recon(const RunConfig& cfg, const std::optional<fs::path>& run, const std::string& method,
              const std::string& split_mode, const fs::path& out, bool force, std::ostream& os) {
  cfg.validate();
  if (split_mode != "holdout" && split_mode != "all") throw UsageError("--split must be 'holdout' or 'all'");
  const Acquisition acq = load_acquisition(cfg.dataset, cfg);
  std::vector<std::size_t> which;
  if (split_mode == "all") {
    for (std::size_t i = 0; i < acq.slices.size(); ++i) which.push_back(i);
  } else {
    which = split_of(acq, cfg.holdout).eval;
  }
  std::optional<Trainer> tr;
  if (method == "model") {
    if (!run) throw UsageError("--method model needs --run");
    tr.emplace(cfg.train, acq.sens);
    tr->load(last_checkpoint(*run));
  } else if (method != "zero_filled") {
    throw UsageError("--method must be 'model' or 'zero_filled'");
  }
  prepare_out(out, force);
  ReconIndex ix{method == "model" ? "model" : "zero_filled", fs::absolute(cfg.dataset).lexically_normal().string(), {}, {}};
  double secs = 0.0;
  for (auto i : which) {
    const auto& s = acq.slices[i];
    ComplexTensor img;
    if (tr) {
      const auto opt = ReconOptions::from(cfg.train, derive_seed(cfg.train.seed, {kTagRecon, s.id}));
      auto r = reconstruct(s.measured, s.omega, acq.sens, tr->generator(), tr->schedule(), opt);
      secs += r.wall_seconds;
      img = std::move(r.image);
    } else {
      img = zero_filled(apply_mask(s.measured, s.omega), EncodingOperator(acq.sens, s.omega));
    }
    write_tensor(img, out / (acq.names[i] + ".cksp"));
    ix.names.push_back(acq.names[i]);
    ix.ids.push_back(s.id);
  }
  write_recon_index(out, ix);
  os << "reconstructed " << which.size() << " slices (" << ix.method << ")";
  if (tr) os << " in " << fmt(secs) << " s";
  os << " into " << out.string() << "\n";
}

MetricReport do_eval(const fs::path& recons, const std::string& method_flag, std::size_t n_boot, std::uint64_t seed,
                     const fs::path& out, std::ostream& os) {
  if (!fs::exists(recons / kReconIndex)) throw IoError("missing " + (recons / kReconIndex).string());
  const json ix = read_json(recons / kReconIndex);
  const auto names = ix.at("slices").get<std::vector<std::string>>();
  const auto ids = ix.at("ids").get<std::vector<std::uint64_t>>();
  const std::string method = method_flag.empty() ? ix.at("method").get<std::string>() : method_flag;
  const fs::path ds = ix.at("dataset").get<std::string>();
  // undersampled directories point back at their phantom set
  const fs::path phantom_root =
      fs::exists(ds / kUndersampleIndex) ? fs::path(read_json(ds / kUndersampleIndex).at("dataset").get<std::string>()) : ds;
  const PhantomSet ph = read_phantoms(phantom_root);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ph.manifest.slices.size(); ++i) pos[stem_of(ph.manifest.slices[i])] = i;
  std::vector<ComplexTensor> rec, ref;
  for (const auto& n : names) {
    const auto it = pos.find(n);
    if (it == pos.end()) throw IoError("reconstruction " + n + " has no reference slice");
    rec.push_back(read_tensor(recons / (n + ".cksp")));
    ref.push_back(ph.images[it->second]);
  }
  MetricReport rep = evaluate_run(rec, ref, method, n_boot, seed);
  fs::create_directories(out);
  write_text(out / "metrics.csv", MetricReport::csv_header() + "\n" + rep.csv_rows(ids));
  json agg = rep.aggregate_json();
  agg["slices"] = ids;
  write_json(out / "metrics.json", agg);
  os << method << ": nmse " << fmt(rep.nmse_mean) << " psnr " << fmt(rep.psnr_mean) << " ssim " << fmt(rep.ssim_mean)
     << " over " << names.size() << " slices\n";
  return rep;
}

struct MetricTable {
  std::string method;
  std::map<std::uint64_t, std::array<double, 3>> rows;  // slice -> nmse, psnr, ssim
};

MetricTable read_metric_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  std::string line;
  std::getline(is, line);
  if (line != MetricReport::csv_header()) throw IoError(p.string() + ": unexpected header '" + line + "'");
  MetricTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    if (f.size() != 5) throw IoError(p.string() + ": malformed row '" + line + "'");
    if (t.method.empty()) t.method = f[1];
    if (f[1] != t.method) throw IoError(p.string() + ": more than one method in one report");
    try {
      t.rows[std::stoull(f[0])] = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
    } catch (const std::exception&) {
      throw IoError(p.string() + ": malformed row '" + line + "'");
    }
  }
  if (t.rows.empty()) throw IoError(p.string() + ": no rows");
  return t;
}

std::string describe_difference(const MetricTable& a, const MetricTable& b) {
  std::vector<std::uint64_t> only_a, only_b;
  for (const auto& [k, v] : a.rows)
    if (!b.rows.count(k)) only_a.push_back(k);
  for (const auto& [k, v] : b.rows)
    if (!a.rows.count(k)) only_b.push_back(k);
  std::ostringstream os;
  auto list = [&](const std::vector<std::uint64_t>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  };
  os << "slice sets differ between '" << a.method << "' and '" << b.method << "': only in first [";
  list(only_a);
  os << "], only in second [";
  list(only_b);
  os << "]";
  return os.str();
}

void cmd_stats(const std::vector<std::string>& reports, double alpha, const fs::path& out, bool force,
               std::ostream& os) {
  if (reports.size() < 2) throw UsageError("stats needs at least two --reports");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  std::vector<MetricTable> tabs;
  for (const auto& r : reports) tabs.push_back(read_metric_csv(r));
  for (std::size_t i = 1; i < tabs.size(); ++i) {
    std::set<std::uint64_t> a, b;
    for (const auto& [k, v] : tabs[0].rows) a.insert(k);
    for (const auto& [k, v] : tabs[i].rows) b.insert(k);
    if (a != b) throw Error(describe_difference(tabs[0], tabs[i]));
  }
  std::vector<std::string> labels;
  for (const auto& t : tabs) labels.push_back(t.method);
  json result = {{"reports", reports}, {"alpha", alpha}};
  const char* names[3] = {"nmse", "psnr", "ssim"};
  for (int m = 0; m < 3; ++m) {
    Groups g;
    for (const auto& t : tabs) {
      g.emplace_back();
      for (const auto& [k, v] : t.rows) g.back().push_back(v[m]);
    }
    bool degenerate = true;
    for (const auto& grp : g)
      for (double v : grp) degenerate = degenerate && v == g[0][0];
    if (degenerate) {
      // every value identical: no between- or within-group variation at all
      json d = {{"anova", {{"f", 0.0}, {"p", 1.0}}}, {"tukey", json::array()}};
      for (std::size_t a = 0; a < g.size(); ++a)
        for (std::size_t b = a + 1; b < g.size(); ++b)
          d["tukey"].push_back({{"a", labels[a]}, {"b", labels[b]}, {"mean_diff", 0.0}, {"q", 0.0}, {"p", 1.0},
                                {"reject", false}});
      result[names[m]] = d;
      continue;
    }
    try {
      result[names[m]] = compare_methods(g, labels, alpha).to_json();
    } catch (const InvalidArgument& e) {
      result[names[m]] = {{"error", e.what()}};
    }
  }
  prepare_out(out, force, true);
  write_json(out / "stats.json", result);
  os << "compared " << tabs.size() << " methods over " << tabs[0].rows.size() << " slices; wrote "
     << (out / "stats.json").string() << "\n";
}

std::string rho_tag(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void cmd_sweep(RunConfig cfg, const std::vector<double>& rhos, const std::vector<double>& rs, const fs::path& out,
               bool force, std::ostream& os) {
  if (rhos.empty() || rs.empty()) throw UsageError("sweep needs at least one rho and one R");
  for (double r : rhos)
    if (!(r > 0.0 && r < 1.0)) throw UsageError("every rho must lie in (0, 1)");
  cfg.validate();
  prepare_out(out, force);
  std::ostringstream csv;
  csv << "R,rho,method,n,nmse_mean,nmse_ci_low,nmse_ci_high,psnr_mean,psnr_ci_low,psnr_ci_high,ssim_mean,"
         "ssim_ci_low,ssim_ci_high\n";
  auto row = [&](double R, const std::string& rho, const MetricReport& m) {
    csv << fmt(R) << ',' << rho << ',' << m.method << ',' << m.nmse.size() << ',' << fmt(m.nmse_mean) << ','
        << fmt(m.nmse_ci.low) << ',' << fmt(m.nmse_ci.high) << ',' << fmt(m.psnr_mean) << ',' << fmt(m.psnr_ci.low)
        << ',' << fmt(m.psnr_ci.high) << ',' << fmt(m.ssim_mean) << ',' << fmt(m.ssim_ci.low) << ','
        << fmt(m.ssim_ci.high) << '\n';
  };
  std::ostringstream base;
  base << "R,method,n,nmse_mean,psnr_mean,ssim_mean\n";
  for (double R : rs) {
    RunConfig c = cfg;
    c.train.R = R;
    c.validate();
    const fs::path zf = out / ("R" + rho_tag(R) + "_zero_filled");
    do_recon(c, std::nullopt, "zero_filled", "holdout", zf / "recons", false, os);
    const auto zr = do_eval(zf / "recons", "zero_filled", c.n_boot, c.train.seed, zf, os);
    base << fmt(R) << ",zero_filled," << zr.nmse.size() << ',' << fmt(zr.nmse_mean) << ',' << fmt(zr.psnr_mean) << ','
         << fmt(zr.ssim_mean) << '\n';
    for (double rho : rhos) {
      c.train.rho = rho;
      c.validate();
      const fs::path run = out / ("R" + rho_tag(R) + "_rho" + rho_tag(rho));
      do_train(c, run, false, false, os);
      do_recon(c, run, "model", "holdout", run / "recons", false, os);
      const auto mr = do_eval(run / "recons", "model", c.n_boot, c.train.seed, run, os);
      row(R, rho_tag(rho), mr);
    }
  }
  write_text(out / "sweep.csv", csv.str());
  write_text(out / "baseline.csv", base.str());
  write_json(out / "config.json", {{"base", cfg.to_json()}, {"rhos", rhos}, {"Rs", rs}});
  os << "sweep finished; wrote " << (out / "sweep.csv").string() << "\n";
}

// ------------------------------------------------------------ option glue

struct TrainFlags {
  std::string config, data;
  std::optional<std::uint64_t> seed;
  std::optional<double> R, rho, lr, lambda, cf, noise;
  std::optional<std::size_t> epochs, batch, holdout, n_boot;
  std::optional<std::int64_t> max_steps, checkpoint_every;

  void add(CLI::App* app, bool with_data = true) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    if (with_data) app->add_option("--data", data, "phantom dataset or undersampled directory");
    app->add_option("--seed", seed, "root seed");
    app->add_option("--R", R, "acceleration rate");
    app->add_option("--rho", rho, "share of Omega given to the model, in (0, 1)");
    app->add_option("--cf", cf, "center fraction");
    app->add_option("--noise", noise, "k-space noise standard deviation");
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--lambda", lambda, "adversarial weight");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch, "batch size");
    app->add_option("--max-steps", max_steps, "cap on optimizer steps (0: no cap)");
    app->add_option("--holdout", holdout, "trailing slices reserved for evaluation");
    app->add_option("--n-boot", n_boot, "bootstrap resamples");
    app->add_option("--checkpoint-every", checkpoint_every, "steps between checkpoints (0: per epoch)");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : RunConfig::from_json(read_json(config));
    if (!data.empty()) c.dataset = data;
    if (seed) c.train.seed = *seed;
    if (R) c.train.R = *R;
    if (rho) c.train.rho = *rho;
    if (cf) c.train.center_fraction = *cf;
    if (noise) c.noise_std = *noise;
    if (lr) c.train.lr = *lr;
    if (lambda) c.train.lambda = *lambda;
    if (epochs) c.train.epochs = *epochs;
    if (batch) c.train.batch_size = *batch;
    if (max_steps) c.train.max_steps = *max_steps;
    if (holdout) c.holdout = *holdout;
    if (n_boot) c.n_boot = *n_boot;
    if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
    c.validate();
    return c;
  }
};

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(f, &used));
      if (used != f.size()) throw std::invalid_argument(f);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad number in ") + what + ": '" + f + "'");
    }
  }
  return v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"kspdiff: self-supervised diffusion reconstruction for undersampled MRI"};
  app.require_subcommand(1);
  std::string out_dir;
  bool force = false;

  auto* ph = app.add_subcommand("phantom", "generate a synthetic phantom dataset");
  std::size_t ph_n = 200, ph_size = 64, ph_coils = 4, ph_ell = 10;
  std::uint64_t ph_seed = 0;
  ph->add_option("--n", ph_n, "number of slices");
  ph->add_option("--size", ph_size, "image side length (>= 16)");
  ph->add_option("--coils", ph_coils, "receiver coils");
  ph->add_option("--ellipses", ph_ell, "ellipses per phantom");
  ph->add_option("--seed", ph_seed, "root seed");
  ph->add_option("--out", out_dir, "output directory");
  ph->add_flag("--force", force, "replace a non-empty output directory");

  auto* us = app.add_subcommand("undersample", "retrospectively undersample a phantom dataset");
  std::string us_data;
  double us_R = 4.0, us_cf = 0.04, us_noise = 0.0;
  std::uint64_t us_seed = 0;
  us->add_option("--data", us_data, "phantom dataset")->required();
  us->add_option("--R", us_R, "acceleration rate");
  us->add_option("--cf", us_cf, "center fraction");
  us->add_option("--noise", us_noise, "k-space noise standard deviation");
  us->add_option("--seed", us_seed, "root seed");
  us->add_option("--out", out_dir, "output directory");
  us->add_flag("--force", force, "replace a non-empty output directory");

  auto* tr = app.add_subcommand("train", "train generator and discriminator");
  TrainFlags tf;
  bool resume = false;
  tf.add(tr);
  tr->add_option("--out", out_dir, "run directory");
  tr->add_flag("--force", force, "replace a non-empty run directory");
  tr->add_flag("--resume", resume, "continue from the run's last checkpoint");

  auto* rc = app.add_subcommand("recon", "reconstruct slices with a trained run or zero filling");
  TrainFlags rf;
  std::string rc_run, rc_method = "model", rc_split = "holdout";
  rf.add(rc);
  rc->add_option("--run", rc_run, "run directory (model reconstructions)");
  rc->add_option("--method", rc_method, "model or zero_filled");
  rc->add_option("--split", rc_split, "holdout or all");
  rc->add_option("--out", out_dir, "output directory (default <run>/recons)");
  rc->add_flag("--force", force, "replace a non-empty output directory");

  auto* ev = app.add_subcommand("eval", "per-slice metrics of a reconstruction directory");
  std::string ev_recons, ev_method;
  std::size_t ev_boot = kDefaultBootstrap;
  std::uint64_t ev_seed = 0;
  ev->add_option("--recons", ev_recons, "reconstruction directory")->required();
  ev->add_option("--method", ev_method, "method label (default from the index)");
  ev->add_option("--n-boot", ev_boot, "bootstrap resamples");
  ev->add_option("--seed", ev_seed, "bootstrap seed");
  ev->add_option("--out", out_dir, "output directory (default: the reconstruction directory)");

  auto* st = app.add_subcommand("stats", "ANOVA and Tukey HSD across method reports");
  std::vector<std::string> st_reports;
  double st_alpha = 0.05;
  st->add_option("--reports", st_reports, "metrics.csv files, one per method")->required();
  st->add_option("--alpha", st_alpha, "family-wise error rate");
  st->add_option("--out", out_dir, "output directory");
  st->add_flag("--force", force, "allow writing into a non-empty directory");

  auto* sw = app.add_subcommand("sweep", "train and evaluate over a grid of rho and R");
  TrainFlags sf;
  std::string sw_rhos = "0.3,0.5,0.7", sw_rs = "2,4";
  sf.add(sw);
  sw->add_option("--rhos", sw_rhos, "comma-separated rho values");
  sw->add_option("--Rs", sw_rs, "comma-separated acceleration rates");
  sw->add_option("--out", out_dir, "output directory");
  sw->add_flag("--force", force, "replace a non-empty output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ph->parsed()) {
      cmd_phantom(ph_n, ph_size, ph_coils, ph_ell, ph_seed, resolve_out(out_dir, "phantom_seed" + std::to_string(ph_seed)),
                  force, out);
    } else if (us->parsed()) {
      cmd_undersample(us_data, us_R, us_cf, us_noise, us_seed,
                      resolve_out(out_dir, "undersample_R" + rho_tag(us_R) + "_seed" + std::to_string(us_seed)),
                      force, out);
    } else if (tr->parsed()) {
      const RunConfig cfg = tf.resolve();
      do_train(cfg,
               resolve_out(out_dir, "train_R" + rho_tag(cfg.train.R) + "_rho" + rho_tag(cfg.train.rho) + "_seed" +
                                        std::to_string(cfg.train.seed)),
               force, resume, out);
    } else if (rc->parsed()) {
      RunConfig cfg;
      std::optional<fs::path> run;
      if (!rc_run.empty()) {
        run = rc_run;
        // the run's own configuration, with explicit flags layered on top
        if (rf.config.empty()) rf.config = (fs::path(rc_run) / "config.json").string();
      }
      cfg = rf.resolve();
      if (cfg.dataset.empty()) throw UsageError("no dataset given (--data, --config or --run)");
      const fs::path dest = !out_dir.empty() ? fs::path(out_dir)
                            : run           ? *run / "recons"
                                            : default_out("recon_" + rc_method);
      do_recon(cfg, run, rc_method, rc_split, dest, force, out);
    } else if (ev->parsed()) {
      do_eval(ev_recons, ev_method, ev_boot, ev_seed, out_dir.empty() ? fs::path(ev_recons) : fs::path(out_dir), out);
    } else if (st->parsed()) {
      cmd_stats(st_reports, st_alpha, resolve_out(out_dir, "stats"), force, out);
    } else if (sw->parsed()) {
      const RunConfig cfg = sf.resolve();
      if (cfg.dataset.empty()) throw UsageError("no dataset given (--data or config 'dataset')");
      cmd_sweep(cfg, parse_list(sw_rhos, "--rhos"), parse_list(sw_rs, "--Rs"),
                resolve_out(out_dir, "sweep_seed" + std::to_string(cfg.train.seed)), force, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace kspdiff::cli
