// slab: generate graph-walk corpora, compute counting baselines and fit
// scaling laws to loss tables.
//
// Exit codes: 0 success, 2 a fit failed, 3 invalid input, 1 anything else.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slab/baseline.hpp"
#include "slab/bootstrap.hpp"
#include "slab/compare.hpp"
#include "slab/frontier.hpp"
#include "slab/graph.hpp"
#include "slab/io.hpp"
#include "slab/loss_table.hpp"
#include "slab/powerfit.hpp"
#include "slab/surface.hpp"
#include "slab/transition.hpp"
#include "slab/walks.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace slab::cli {

constexpr int kExitFitFailure = 2;
constexpr int kExitInvalid = 3;

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string num(double v) { return detail::format_number(v); }

// Output directory plus the bookkeeping for its manifest.
class OutDir {
 public:
  explicit OutDir(const std::string& dir) : dir_(dir) {
    if (dir.empty()) throw InvalidArgument("no output directory given");
    if (!fs::is_directory(dir_)) throw IoError("output directory does not exist: " + dir);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // For files written through a path rather than open().
  std::string track(const std::string& name) {
    files_.push_back(name);
    return path(name);
  }

  std::ofstream open(const std::string& name, bool binary = false) {
    files_.push_back(name);
    return io::open_out(path(name), binary);
  }

  void write_json(const std::string& name, const json& j) {
    auto os = open(name);
    os << j.dump(2) << '\n';
    if (!os) throw IoError("write failed: " + path(name));
  }

  // Hashes every output written so far; inputs are hashed as given.
  void write_manifest(const std::string& command, const CLI::App& sub, const std::vector<std::string>& inputs,
                      json extra = json::object()) {
    json m;
    m["tool"] = "slab";
    m["command"] = command;
    // Everything but the output location, so reruns elsewhere hash the same.
    std::istringstream cfg(sub.config_to_str(true, false));
    std::string settings;
    for (std::string line; std::getline(cfg, line);)
      if (!line.starts_with("out=")) settings += line + '\n';
    m["settings"] = settings;
    m["entropy_units"] = "nats";
    json in = json::object();
    for (const auto& p : inputs) in[p] = hex64(io::hash_file(p));
    m["inputs"] = in;
    json out = json::object();
    for (const auto& f : files_) out[f] = hex64(io::hash_file(path(f)));
    m["outputs"] = out;
    for (auto& [k, v] : extra.items()) m[k] = v;
    auto os = io::open_out(path(command + ".manifest.json"));
    os << m.dump(2) << '\n';
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& f : io::split_csv(s)) out.push_back(detail::parse_number(io::trim(f), "list entry", 1));
  if (out.empty()) throw InvalidArgument("empty list '" + s + "'");
  return out;
}

TransitionModel load_model(const std::string& path) {
  auto is = io::open_in(path, true);
  return read_transition_model(is);
}

ParamAxis parse_axis(const std::string& s) { return s == "nonembed" ? ParamAxis::kNonEmbedding : ParamAxis::kTotal; }

WildResiduals parse_residuals(const std::string& s) {
  if (s == "raw") return WildResiduals::kRaw;
  if (s == "hc2") return WildResiduals::kHc2;
  return WildResiduals::kHc3;
}

std::vector<LossPoint> load_points(const std::string& table, const std::string& axis) {
  const auto t = read_loss_table(table);
  t.validate();
  return loss_points(t, parse_axis(axis));
}

// ---- gen-graph / gen-walks ----

struct GenArgs {
  std::string family = "er";
  std::size_t nodes = 1000;
  std::size_t edges = 5000;
  std::size_t attach = 3;
  std::string weighting = "unit";
  double kappa = 1.0;
  std::uint32_t k_min = 1;
  std::uint32_t k_max = 1000;
  std::uint32_t seq_len = 0;
  std::uint64_t n_seqs = 0;
  Seed seed = 0;
  std::string out;
};

struct WalkArgs {
  std::string model;
  std::uint32_t seq_len = 50;
  std::uint64_t n_seqs = 100;
  Seed seed = 0;
  std::string out;
};

json walk_summary(const WalkDataset& ds) {
  return {{"vocab_size", ds.vocab_size}, {"seq_len", ds.seq_len}, {"n_seqs", ds.n_seqs},
          {"total_tokens", ds.total_tokens()}, {"seed", ds.seed}};
}

int run_gen_graph(const GenArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const Graph g = a.family == "ba" ? gen_barabasi_albert(a.nodes, a.attach, derive_seed(a.seed, 0))
                                   : gen_erdos_renyi(a.nodes, a.edges, derive_seed(a.seed, 0));
  json info{{"family", a.family}, {"n_nodes", g.n_nodes()}, {"n_edges", g.n_edges()}, {"weighting", a.weighting}};
  TransitionModel model;
  {
    auto os = out.open("graph.edges");
    if (a.weighting == "power") {
      const auto wg = assign_weights(g, a.kappa, a.k_min, a.k_max, derive_seed(a.seed, 1));
      write_edge_list(os, wg);
      model = build_transition_model(wg);
      info["kappa"] = a.kappa;
      info["k_min"] = a.k_min;
      info["k_max"] = a.k_max;
    } else {
      write_edge_list(os, g);
      model = build_unbiased_model(g);
    }
  }
  {
    auto os = out.open("model.sltm", true);
    write_transition_model(os, model);
  }
  if (a.seq_len > 0 && a.n_seqs > 0) {
    const auto ds = sample_walks(model, a.seq_len, a.n_seqs, derive_seed(a.seed, 2));
    auto os = out.open("walks.slwk", true);
    write_walks(os, ds);
    info["walks"] = walk_summary(ds);
  }
  out.write_manifest("gen-graph", sub, {}, {{"graph", info}});
  return 0;
}

int run_gen_walks(const WalkArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto model = load_model(a.model);
  const auto ds = sample_walks(model, a.seq_len, a.n_seqs, a.seed);
  {
    auto os = out.open("walks.slwk", true);
    write_walks(os, ds);
  }
  out.write_manifest("gen-walks", sub, {a.model}, {{"walks", walk_summary(ds)}});
  return 0;
}

// ---- diagnostics ----

struct DiagArgs {
  std::string model;
  std::string walks;
  std::string out;
};

int run_diagnostics(const DiagArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto model = load_model(a.model);
  const auto d = diagnostics(model);
  json j{{"n_nodes", model.n_nodes},
         {"n_nodes_used", d.n_nodes_used},
         {"lambda2", {{"re", d.lambda2_real}, {"im", d.lambda2_imag}}},
         {"spectral_gap", d.spectral_gap},
         {"entropy_rate", d.entropy_rate},
         {"stationary_entropy", d.stationary_entropy},
         {"units", "nats"},
         {"warnings", d.warnings}};
  std::vector<std::string> inputs{a.model};
  if (!a.walks.empty()) {
    auto is = io::open_in(a.walks, true);
    const auto ds = read_walks(is);
    if (ds.vocab_size != model.n_nodes) throw InvalidArgument("walk vocabulary does not match the model: " + a.walks);
    j["walks"] = walk_summary(ds);
    j["walks"]["unigram_tv"] = total_variation(unigram_frequencies(ds), d.stationary);
    j["walks"]["illegal_transitions"] = count_illegal_transitions(model, ds);
    inputs.push_back(a.walks);
  }
  out.write_json("diagnostics.json", j);
  {
    auto os = out.open("ranked.csv");
    os.precision(17);
    write_ranked_csv(os, ranked_distributions(model, d.stationary));
  }
  out.write_manifest("diagnostics", sub, inputs);
  return 0;
}

// ---- baseline ----

struct BaselineArgs {
  std::string source = "uniform";
  std::size_t vocab = 16;
  std::string model;
  std::string kind = "cse";
  int order = 1;
  std::string d_list = "100,1000,10000";
  std::size_t trials = 2000;
  double smoothing = 1e-3;
  Seed seed = 0;
  std::string out;
};

int run_baseline(const BaselineArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto ds = parse_list(a.d_list);
  for (double d : ds)
    if (!(d >= 1.0) || d != std::floor(d)) throw InvalidArgument("D values must be positive integers, got " + num(d));
  if (a.trials == 1) throw InvalidArgument("trials must be 0 (analytic only) or at least 2");
  std::vector<std::string> inputs;
  json j;
  std::function<double(double)> analytic;
  std::function<McEstimate(std::uint64_t, Seed)> mc;
  std::optional<Distribution> pi;
  TransitionModel model;
  BaselinePrediction expansion;
  if (a.source == "model") {
    model = load_model(a.model);
    inputs.push_back(a.model);
    const auto pi_model = stationary_distribution(model);
    expansion = walk_baseline_expansion(model, pi_model);
    analytic = [&](double d) { return walk_baseline_cse(model, d); };
    mc = [&](std::uint64_t d, Seed s) { return mc_counting_loss(model, d, a.trials, s, a.smoothing); };
  } else {
    pi = a.source == "random" ? Distribution::random(a.vocab, derive_seed(a.seed, 0xD1)) : Distribution::uniform(a.vocab);
    const auto kind = a.kind == "mse" ? LossKind::kMse : LossKind::kCse;
    expansion = kind == LossKind::kMse ? mse_expansion(*pi) : cse_expansion(*pi, a.order);
    analytic = [&, kind](double d) { return kind == LossKind::kMse ? expected_mse(*pi, d) : expected_cse(*pi, d, a.order); };
    mc = [&, kind](std::uint64_t d, Seed s) { return mc_counting_loss(*pi, d, kind, a.trials, s, a.smoothing); };
    j["probabilities"] = pi->probs();
  }
  j["source"] = a.source;
  j["loss"] = a.source == "model" ? "cse" : a.kind;
  j["expansion"] = {{"leading", expansion.leading}, {"coeff_1", expansion.coeff_1}, {"coeff_2", expansion.coeff_2}};
  j["units"] = "nats";
  auto os = out.open("baseline.csv");
  os << "D,analytic,mc_mean,mc_stderr\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto d = static_cast<std::uint64_t>(ds[i]);
    os << d << ',' << num(analytic(ds[i])) << ',';
    if (a.trials >= 2) {
      const auto e = mc(d, derive_seed(a.seed, i));
      os << num(e.mean) << ',' << num(e.std_error);
    } else {
      os << ',';
    }
    os << '\n';
  }
  os.close();
  out.write_json("baseline.json", j);
  out.write_manifest("baseline", sub, inputs);
  return 0;
}

// ---- ingest ----

struct IngestArgs {
  std::string input;
  std::string schema;
  std::size_t drop_largest = 0;
  std::string axis = "total";
  std::string dataset_tag;
  std::string out;
};

int run_ingest(const IngestArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  IngestOptions opt;
  if (a.schema == "chinchilla") opt.schema = SchemaMap::epoch_chinchilla();
  else if (!a.schema.empty()) opt.schema = SchemaMap::parse(a.schema);
  opt.default_dataset_tag = a.dataset_tag;
  const auto raw = read_loss_table(a.input, opt);
  const auto t = normalize_table(raw, a.drop_largest, parse_axis(a.axis));
  write_loss_table(out.track("loss_table.csv"), t);
  for (const auto& w : t.warnings) std::cerr << "warning: " << w << '\n';
  out.write_json("ingest.json", {{"rows_read", raw.rows.size()},
                                 {"rows_written", t.rows.size()},
                                 {"dropped_largest", a.drop_largest},
                                 {"warnings", t.warnings}});
  out.write_manifest("ingest", sub, {a.input});
  return 0;
}

// ---- fit-1d ----

struct PowerArgs {
  int starts = 40;
  double beta_min = 1e-3;
  double beta_max = 10.0;
  double delta = 0.0;  // 0: 1.4826 * MAD of the slice
  bool fix_e_zero = false;

  PowerLawOptions options(Seed seed) const {
    PowerLawOptions o;
    o.n_starts = starts;
    o.beta_min = beta_min;
    o.beta_max = beta_max;
    o.fix_E_zero = fix_e_zero;
    o.seed = seed;
    if (delta > 0.0) o.huber_delta = delta;
    return o;
  }
};

struct Fit1dArgs {
  std::string table;
  std::string axis = "total";
  std::string vary = "d";
  double slice = 0.0;  // 0: every slice
  std::size_t min_points = 4;
  std::size_t n_boot = 4000;
  double alpha = 0.05;
  std::string residuals = "hc3";
  std::size_t drop_extremes = 2;
  PowerArgs power;
  Seed seed = 0;
  std::string out;
};

json interval(const ParamInterval& p) { return {{"lo", p.lo}, {"hi", p.hi}, {"stderr", p.std_error}}; }

json power_params(const PowerLawFit& f) {
  return {{"E", f.E}, {"B", f.B}, {"beta", f.beta}, {"x0", f.x0}, {"huber_delta", f.huber_delta},
          {"objective", f.objective}, {"fixed_E_zero", f.fixed_E_zero}, {"n_converged", f.n_converged}};
}

// Report for one slice: params, ci, mse, exp_baseline_mse, mse_ratio, n_boot.
json fit_slice_report(const Series1D& s, const Fit1dArgs& a, Seed seed, PowerLawFit* fit_out) {
  json r;
  r["held"] = {{s.held_label, s.held_value}};
  r["n_points"] = s.size();
  try {
    const auto fit = fit_power_law(s, a.power.options(seed));
    if (fit_out) *fit_out = fit;
    r["status"] = "ok";
    r["params"] = power_params(fit);
    if (a.n_boot > 0) {
      const auto ci = bca_ci(s, fit, a.n_boot, a.alpha, derive_seed(seed, 1), a.power.options(seed),
                             parse_residuals(a.residuals));
      r["ci"] = {{"E", interval(ci.E)}, {"B", interval(ci.B)}, {"beta", interval(ci.beta)},
                 {"level", 1.0 - ci.alpha}, {"n_failed", ci.n_failed}, {"residuals", to_string(ci.residuals)},
                 {"warnings", ci.warnings}};
    }
    r["mse"] = fit.mse;
    try {
      ExpOptions eo;
      eo.seed = seed;
      const auto e = fit_exponential(s, eo);
      r["exp_baseline_mse"] = e.mse;
      r["mse_ratio"] = e.mse > 0.0 ? json(mse_ratio(fit, e)) : json(nullptr);
    } catch (const FitFailure&) {
      r["exp_baseline_mse"] = nullptr;
      r["mse_ratio"] = nullptr;
    }
  } catch (const FitFailure& e) {
    r["status"] = "failed";
    r["error"] = e.what();
  }
  r["n_boot"] = a.n_boot;
  return r;
}

// Slices of the table holding N (vary = d) or D (vary = n) fixed.
std::vector<Series1D> slices_of(const std::vector<LossPoint>& pts, bool vary_d, std::size_t min_points) {
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> g;
  for (const auto& p : pts) {
    auto& [xs, ys] = g[vary_d ? p.n : p.d];
    xs.push_back(vary_d ? p.d : p.n);
    ys.push_back(p.loss);
  }
  std::vector<Series1D> out;
  for (auto& [held, v] : g)
    if (v.first.size() >= min_points) out.push_back(Series1D::make(v.first, v.second, vary_d ? "N" : "D", held));
  return out;
}

int run_fit_1d(const Fit1dArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const bool vary_d = a.vary == "d";
  auto slices = slices_of(load_points(a.table, a.axis), vary_d, a.min_points);
  if (a.slice > 0.0)
    std::erase_if(slices, [&](const Series1D& s) { return std::abs(s.held_value / a.slice - 1.0) > 1e-9; });
  if (slices.empty())
    throw InvalidArgument("no slice with at least " + std::to_string(a.min_points) + " points in " + a.table);
  json settings{{"vary", a.vary}, {"axis", a.axis}, {"n_starts", a.power.starts}, {"beta_bounds", {a.power.beta_min, a.power.beta_max}},
                {"huber_delta", a.power.delta > 0.0 ? json(a.power.delta) : json("1.4826*MAD")},
                {"fix_E_zero", a.power.fix_e_zero}, {"alpha", a.alpha}, {"residuals", a.residuals}, {"seed", a.seed}};
  json fits = json::array();
  std::vector<PowerLawFit> ok;
  std::size_t failed = 0;
  auto curves = out.open("fit_1d_curves.csv");
  curves << "held,x,loss,fit\n";
  for (std::size_t i = 0; i < slices.size(); ++i) {
    PowerLawFit f;
    auto r = fit_slice_report(slices[i], a, derive_seed(a.seed, i), &f);
    r["settings"] = settings;
    if (r["status"] == "ok") {
      ok.push_back(f);
      for (std::size_t k = 0; k < slices[i].size(); ++k)
        curves << num(slices[i].held_value) << ',' << num(slices[i].xs[k]) << ',' << num(slices[i].ys[k]) << ','
               << num(f.predict(slices[i].xs[k])) << '\n';
    } else {
      ++failed;
    }
    fits.push_back(std::move(r));
  }
  curves.close();
  json j{{"settings", settings}, {"fits", fits}, {"n_failed", failed}};
  if (ok.size() > a.drop_extremes) {
    const auto s = summarize_exponents(ok, vary_d ? ScalingAxis::kD : ScalingAxis::kN, a.drop_extremes);
    j["summary"] = {{"mean", s.mean}, {"std", s.stddev}, {"n_dropped", s.n_dropped}, {"exponents", s.exponents},
                    {"entropy_proxy", s.entropy_proxy}};
  }
  out.write_json("fit_1d.json", j);
  out.write_manifest("fit-1d", sub, {a.table});
  return failed > 0 ? kExitFitFailure : 0;
}

// ---- surfaces: fit-2d, frontier, compare-fits, report ----

struct SurfaceArgs {
  double delta = 1e-3;
  double lambda = 1e-3;
  double kernel_delta = 1e-3;
  int width = 512;
  int epochs = 5000;
  Seed seed = 0;

  CompareOptions options() const {
    CompareOptions o;
    o.seed = seed;
    o.parametric.huber_delta = delta;
    o.kernel.lambda = lambda;
    o.kernel.huber_delta = kernel_delta;
    o.mlp.width = width;
    o.mlp.epochs = epochs;
    o.mlp.seed = seed;
    return o;
  }
};

void add_surface_options(CLI::App* sub, SurfaceArgs& s) {
  sub->add_option("--delta", s.delta, "Huber cutoff on log residuals for the parametric forms")->capture_default_str();
  sub->add_option("--lambda", s.lambda, "Kernel ridge penalty")->capture_default_str();
  sub->add_option("--kernel-delta", s.kernel_delta, "Huber cutoff for the kernel fit")->capture_default_str();
  sub->add_option("--width", s.width, "MLP hidden width")->capture_default_str();
  sub->add_option("--epochs", s.epochs, "MLP epoch budget")->capture_default_str();
}

json surface_json(const SurfaceModel& m, const std::vector<LossPoint>& pts) {
  json d = json::object();
  for (const auto& [k, v] : m.diagnostics) d[k] = v;
  return {{"form", to_string(m.kind)},
          {"params", d},
          {"train_mse", mean_squared_error(m, pts)},
          {"n_points", pts.size()},
          {"range", {{"n", {m.n_min, m.n_max}}, {"d", {m.d_min, m.d_max}}}}};
}

void write_panels(OutDir& out, const SurfaceModel& m, const std::vector<LossPoint>& pts) {
  auto os = out.open("fit_2d_points.csv");
  os << "N,D,loss,fit\n";
  for (const auto& p : pts) os << num(p.n) << ',' << num(p.d) << ',' << num(p.loss) << ',' << num(m.predict(p.n, p.d)) << '\n';
}

struct Fit2dArgs {
  std::string table;
  std::string axis = "total";
  std::string form = "chinchilla_2d";
  SurfaceArgs surface;
  std::string out;
};

int run_fit_2d(const Fit2dArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto pts = load_points(a.table, a.axis);
  const auto method = parse_fit_method(a.form);
  if (method == FitMethod::kOneD) throw InvalidArgument("fit-2d: use fit-1d for per-slice fits");
  const auto m = detail::fit_surface(method, pts, a.surface.options(), 0);
  auto j = surface_json(m, pts);
  if (method == FitMethod::kChinchilla) {
    const auto cf = closed_form_frontier(m.diagnostics.at("alpha"), m.diagnostics.at("beta"));
    j["frontier_closed_form"] = {{"gamma", cf.gamma}, {"a", cf.a}, {"b", cf.b}};
  }
  out.write_json("fit_2d.json", j);
  write_panels(out, m, pts);
  out.write_manifest("fit-2d", sub, {a.table});
  return 0;
}

struct FrontierArgs {
  std::string table;
  std::string axis = "total";
  std::string form = "mlp";
  int grid_points = 100;
  double clip_lo = 0.1;
  double clip_hi = 0.1;
  std::size_t n_boot = 200;
  SurfaceArgs surface;
  std::string out;
};

json frontier_json(const FrontierResult& r) {
  json j{{"gamma", r.gamma}, {"K", r.K}, {"E_C", r.E_C}, {"a", r.a}, {"N0", r.N0}, {"b", r.b},
         {"D0", r.D0}, {"a_plus_b", r.a_plus_b}, {"n_used", r.n_used}};
  if (r.l_ci) j["ci"] = {{"gamma", interval(r.l_ci->beta)}, {"E_C", interval(r.l_ci->E)}, {"level", 1.0 - r.l_ci->alpha}};
  return j;
}

FrontierResult frontier_of(OutDir& out, const SurfaceModel& m, const FrontierArgs& a) {
  FrontierOptions fo;
  fo.grid_points = a.grid_points;
  fo.clip_lo = a.clip_lo;
  fo.clip_hi = a.clip_hi;
  const auto fs = sample_frontier(m, fo);
  {
    auto os = out.open("frontier.csv");
    write_frontier_csv(os, fs);
  }
  FrontierFitOptions ff;
  ff.n_boot = a.n_boot;
  ff.seed = derive_seed(a.surface.seed, 7);
  return fit_frontier(fs, ff);
}

int run_frontier(const FrontierArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto pts = load_points(a.table, a.axis);
  const auto method = parse_fit_method(a.form);
  if (method == FitMethod::kOneD) throw InvalidArgument("frontier: needs a surface form");
  const auto m = detail::fit_surface(method, pts, a.surface.options(), 0);
  const auto r = frontier_of(out, m, a);
  out.write_json("frontier.json", {{"surface", surface_json(m, pts)},
                                   {"frontier", frontier_json(r)},
                                   {"grid_points", a.grid_points},
                                   {"clip", {a.clip_lo, a.clip_hi}}});
  out.write_manifest("frontier", sub, {a.table});
  return 0;
}

struct CompareArgs {
  std::string table;
  std::string axis = "total";
  std::vector<std::string> methods{"chinchilla_2d", "kernel", "mlp", "1d"};
  std::size_t splits = 20;
  double train_fraction = 0.8;
  SurfaceArgs surface;
  std::string out;
};

int run_compare(const CompareArgs& a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto pts = load_points(a.table, a.axis);
  std::vector<FitMethod> methods;
  for (const auto& s : a.methods) methods.push_back(parse_fit_method(s));
  auto opt = a.surface.options();
  opt.n_splits = a.splits;
  opt.train_fraction = a.train_fraction;
  const auto rep = compare_fits(pts, methods, opt);
  json ms = json::object();
  std::size_t failures = 0;
  for (const auto& m : rep.methods) {
    failures += m.n_failures;
    ms[to_string(m.method)] = {{"train_mse_mean", m.train_mse_mean}, {"val_mse_mean", m.val_mse_mean},
                               {"n_failures", m.n_failures},         {"failures", m.failures},
                               {"train_mse", m.train_mse},           {"val_mse", m.val_mse},
                               {"n_uncovered", m.n_uncovered}};
  }
  out.write_json("compare.json",
                 {{"n_points", rep.n_points}, {"n_splits", rep.n_splits}, {"train_fraction", a.train_fraction},
                  {"seed", rep.seed}, {"methods", ms}});
  out.write_manifest("compare-fits", sub, {a.table});
  return failures > 0 ? kExitFitFailure : 0;
}

struct ReportArgs {
  std::string table;
  std::string axis = "total";
  std::string frontier_form = "mlp";
  Fit1dArgs one_d;
  FrontierArgs frontier;
  SurfaceArgs surface;
  std::string out;
};

// 2d fit, per-slice 1d fits in both directions and the frontier; every part
// records its own status.
int run_report(ReportArgs a, const CLI::App& sub) {
  OutDir out(a.out);
  const auto pts = load_points(a.table, a.axis);
  json j;
  bool all_ok = true;
  auto part = [&](const char* name, auto&& fn) {
    try {
      j[name] = fn();
      j[name]["status"] = "ok";
    } catch (const FitFailure& e) {
      all_ok = false;
      j[name] = {{"status", "failed"}, {"error", e.what()}};
    } catch (const NumericFailure& e) {
      all_ok = false;
      j[name] = {{"status", "failed"}, {"error", e.what()}};
    }
  };
  const auto opts = a.surface.options();
  part("fit_2d", [&] {
    const auto m = detail::fit_surface(FitMethod::kChinchilla, pts, opts, 0);
    write_panels(out, m, pts);
    auto r = surface_json(m, pts);
    const auto cf = closed_form_frontier(m.diagnostics.at("alpha"), m.diagnostics.at("beta"));
    r["frontier_closed_form"] = {{"gamma", cf.gamma}, {"a", cf.a}, {"b", cf.b}};
    return r;
  });
  for (const bool vary_d : {true, false}) {
    const char* name = vary_d ? "loss_vs_d" : "loss_vs_n";
    part(name, [&] {
      const auto slices = slices_of(pts, vary_d, a.one_d.min_points);
      if (slices.empty()) throw FitFailure("no slice with enough points");
      std::vector<PowerLawFit> ok;
      json fits = json::array();
      auto os = out.open(std::string("panel_") + name + ".csv");
      os << "held,x,loss,fit\n";
      for (std::size_t i = 0; i < slices.size(); ++i) {
        PowerLawFit f;
        auto r = fit_slice_report(slices[i], a.one_d, derive_seed(a.one_d.seed, i + (vary_d ? 0 : 1000)), &f);
        if (r["status"] == "ok") {
          ok.push_back(f);
          for (std::size_t k = 0; k < slices[i].size(); ++k)
            os << num(slices[i].held_value) << ',' << num(slices[i].xs[k]) << ',' << num(slices[i].ys[k]) << ','
               << num(f.predict(slices[i].xs[k])) << '\n';
        }
        fits.push_back(std::move(r));
      }
      json r{{"fits", fits}};
      if (ok.size() != slices.size()) throw FitFailure(std::to_string(slices.size() - ok.size()) + " slice fit(s) failed");
      if (ok.size() > a.one_d.drop_extremes) {
        const auto s = summarize_exponents(ok, vary_d ? ScalingAxis::kD : ScalingAxis::kN, a.one_d.drop_extremes);
        r["summary"] = {{"mean", s.mean}, {"std", s.stddev}, {"n_dropped", s.n_dropped}, {"exponents", s.exponents}};
      }
      return r;
    });
  }
  part("frontier", [&] {
    const auto m = detail::fit_surface(parse_fit_method(a.frontier_form), pts, opts, 0);
    a.frontier.surface = a.surface;
    auto r = frontier_json(frontier_of(out, m, a.frontier));
    r["surface"] = to_string(m.kind);
    return r;
  });
  out.write_json("report.json", j);
  out.write_manifest("report", sub, {a.table});
  return all_ok ? 0 : kExitFitFailure;
}

int main_impl(int argc, char** argv) {
  CLI::App app{"slab: graph-walk corpora, counting baselines and scaling-law fits"};
  app.set_config("--config", "", "TOML key = value file; [subcommand] sections hold subcommand options");
  app.require_subcommand(1);
  const auto seed_opt = [](CLI::App* s, Seed& seed) { s->add_option("--seed", seed, "Master seed")->required(); };
  const auto out_opt = [](CLI::App* s, std::string& out) {
    s->add_option("--out", out, "Existing output directory")->required();
  };
  const auto table_opt = [](CLI::App* s, std::string& table, std::string& axis) {
    s->add_option("--table", table, "Loss table CSV")->required();
    s->add_option("--axis", axis, "Parameter count column: total | nonembed")
        ->check(CLI::IsMember({"total", "nonembed"}))
        ->capture_default_str();
  };
  int rc = 0;

  GenArgs gen;
  auto* g = app.add_subcommand("gen-graph", "Random graph, its transition model and optional walks");
  g->add_option("--family", gen.family, "er | ba")->check(CLI::IsMember({"er", "ba"}))->capture_default_str();
  g->add_option("--nodes", gen.nodes)->capture_default_str();
  g->add_option("--edges", gen.edges, "Edge count (er)")->capture_default_str();
  g->add_option("--attach", gen.attach, "Edges per new node (ba)")->capture_default_str();
  g->add_option("--weighting", gen.weighting, "unit | power")
      ->check(CLI::IsMember({"unit", "power"}))
      ->capture_default_str();
  g->add_option("--kappa", gen.kappa, "Weight exponent, Pr(k) ~ k^-kappa")->capture_default_str();
  g->add_option("--k-min", gen.k_min)->capture_default_str();
  g->add_option("--k-max", gen.k_max)->capture_default_str();
  g->add_option("--seq-len", gen.seq_len, "Also sample walks of this length")->capture_default_str();
  g->add_option("--n-seqs", gen.n_seqs)->capture_default_str();
  seed_opt(g, gen.seed);
  out_opt(g, gen.out);
  g->callback([&] { rc = run_gen_graph(gen, *g); });

  WalkArgs walk;
  auto* w = app.add_subcommand("gen-walks", "Sample a token stream from a transition model");
  w->add_option("--model", walk.model)->required()->check(CLI::ExistingFile);
  w->add_option("--seq-len", walk.seq_len)->capture_default_str();
  w->add_option("--n-seqs", walk.n_seqs)->capture_default_str();
  seed_opt(w, walk.seed);
  out_opt(w, walk.out);
  w->callback([&] { rc = run_gen_walks(walk, *w); });

  DiagArgs diag;
  auto* d = app.add_subcommand("diagnostics", "Stationary law, spectral gap, entropies, ranked distributions");
  d->add_option("--model", diag.model)->required()->check(CLI::ExistingFile);
  d->add_option("--walks", diag.walks, "Token stream to compare against the stationary law")->check(CLI::ExistingFile);
  out_opt(d, diag.out);
  d->callback([&] { rc = run_diagnostics(diag, *d); });

  BaselineArgs base;
  auto* b = app.add_subcommand("baseline", "Counting-estimator loss: analytic expansion against Monte Carlo");
  b->add_option("--source", base.source, "uniform | random | model")
      ->check(CLI::IsMember({"uniform", "random", "model"}))
      ->capture_default_str();
  b->add_option("--vocab", base.vocab)->capture_default_str();
  b->add_option("--model", base.model, "Transition model (source = model)")->check(CLI::ExistingFile);
  b->add_option("--kind", base.kind, "cse | mse")->check(CLI::IsMember({"cse", "mse"}))->capture_default_str();
  b->add_option("--order", base.order, "Terms of the 1/D expansion")->check(CLI::Range(1, 2))->capture_default_str();
  b->add_option("--d", base.d_list, "Comma-separated sample sizes")->capture_default_str();
  b->add_option("--trials", base.trials, "Monte-Carlo trials per D; 0 skips")->capture_default_str();
  b->add_option("--smoothing", base.smoothing)->capture_default_str();
  seed_opt(b, base.seed);
  out_opt(b, base.out);
  b->callback([&] {
    if (base.source == "model" && base.model.empty()) throw InvalidArgument("--source model needs --model");
    rc = run_baseline(base, *b);
  });

  IngestArgs ing;
  auto* in = app.add_subcommand("ingest", "Normalize a loss CSV into the loss table format");
  in->add_option("--input", ing.input)->required();
  in->add_option("--schema", ing.schema, "'chinchilla' or field=column,... (default: native columns)");
  in->add_option("--drop-largest", ing.drop_largest, "Drop the k largest losses")->capture_default_str();
  in->add_option("--axis", ing.axis, "Axis used for the per-(N, D) minimum")
      ->check(CLI::IsMember({"total", "nonembed"}))
      ->capture_default_str();
  in->add_option("--dataset-tag", ing.dataset_tag);
  out_opt(in, ing.out);
  in->callback([&] { rc = run_ingest(ing, *in); });

  Fit1dArgs f1;
  auto* f = app.add_subcommand("fit-1d", "Robust power-law fits per slice with BCa intervals");
  const auto add_1d = [](CLI::App* s, Fit1dArgs& a) {
    s->add_option("--min-points", a.min_points, "Smallest slice fitted")->capture_default_str();
    s->add_option("--n-boot", a.n_boot, "Bootstrap replicates; 0 omits intervals")->capture_default_str();
    s->add_option("--ci-alpha", a.alpha)->capture_default_str();
    s->add_option("--wild-residuals", a.residuals, "raw | hc2 | hc3")
        ->check(CLI::IsMember({"raw", "hc2", "hc3"}))
        ->capture_default_str();
    s->add_option("--drop-extremes", a.drop_extremes, "Exponents left out of the summary")->capture_default_str();
    s->add_option("--starts", a.power.starts)->capture_default_str();
    s->add_option("--beta-min", a.power.beta_min)->capture_default_str();
    s->add_option("--beta-max", a.power.beta_max)->capture_default_str();
    s->add_option("--huber-delta", a.power.delta, "0 uses 1.4826 * MAD of the slice")->capture_default_str();
  };
  table_opt(f, f1.table, f1.axis);
  f->add_option("--vary", f1.vary, "d: loss against D at fixed N; n: against N at fixed D")
      ->check(CLI::IsMember({"d", "n"}))
      ->capture_default_str();
  f->add_option("--slice", f1.slice, "Only the slice at this held value");
  add_1d(f, f1);
  f->add_flag("--fix-e-zero", f1.power.fix_e_zero, "Pin the offset at zero");
  seed_opt(f, f1.seed);
  out_opt(f, f1.out);
  f->callback([&] { rc = run_fit_1d(f1, *f); });

  const std::vector<std::string> forms{"chinchilla_2d", "chinchilla", "kaplan_2d", "kaplan", "kernel", "mlp"};

  Fit2dArgs f2;
  auto* s2 = app.add_subcommand("fit-2d", "Fit a loss surface L(N, D)");
  table_opt(s2, f2.table, f2.axis);
  s2->add_option("--form", f2.form)->check(CLI::IsMember(forms))->capture_default_str();
  add_surface_options(s2, f2.surface);
  seed_opt(s2, f2.surface.seed);
  out_opt(s2, f2.out);
  s2->callback([&] { rc = run_fit_2d(f2, *s2); });

  FrontierArgs fr;
  const auto add_frontier = [](CLI::App* s, FrontierArgs& a) {
    s->add_option("--grid-points", a.grid_points)->capture_default_str();
    s->add_option("--clip-lo", a.clip_lo, "Fraction of the log-C range dropped at the low end")->capture_default_str();
    s->add_option("--clip-hi", a.clip_hi)->capture_default_str();
    s->add_option("--frontier-boot", a.n_boot, "Bootstrap replicates for the L_opt fit")->capture_default_str();
  };
  auto* fo = app.add_subcommand("frontier", "Compute-optimal frontier of a fitted surface");
  table_opt(fo, fr.table, fr.axis);
  fo->add_option("--form", fr.form)->check(CLI::IsMember(forms))->capture_default_str();
  add_frontier(fo, fr);
  add_surface_options(fo, fr.surface);
  seed_opt(fo, fr.surface.seed);
  out_opt(fo, fr.out);
  fo->callback([&] { rc = run_frontier(fr, *fo); });

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare-fits", "Validation MSE of fit methods over random train/validation splits");
  table_opt(c, cmp.table, cmp.axis);
  c->add_option("--methods", cmp.methods)->delimiter(',')->check(CLI::IsMember({"chinchilla_2d", "chinchilla",
                                                                                  "kaplan_2d", "kaplan", "kernel",
                                                                                  "mlp", "1d"}))
      ->capture_default_str();
  c->add_option("--splits", cmp.splits)->capture_default_str();
  c->add_option("--train-fraction", cmp.train_fraction)->capture_default_str();
  add_surface_options(c, cmp.surface);
  seed_opt(c, cmp.surface.seed);
  out_opt(c, cmp.out);
  c->callback([&] { rc = run_compare(cmp, *c); });

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "2d fit, 1d slice fits and frontier in one pass");
  table_opt(r, rep.table, rep.axis);
  r->add_option("--frontier-form", rep.frontier_form)->check(CLI::IsMember(forms))->capture_default_str();
  add_1d(r, rep.one_d);
  add_frontier(r, rep.frontier);
  add_surface_options(r, rep.surface);
  seed_opt(r, rep.surface.seed);
  out_opt(r, rep.out);
  r->callback([&] {
    rep.one_d.seed = derive_seed(rep.surface.seed, 1);
    rc = run_report(rep, *r);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }
  return rc;
}

}  // namespace slab::cli

int main(int argc, char** argv) {
  using namespace slab;
  try {
    return cli::main_impl(argc, argv);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitInvalid;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitInvalid;
  } catch (const DegenerateInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitInvalid;
  } catch (const FitFailure& e) {
    std::cerr << "fit failed: " << e.what() << '\n';
    return cli::kExitFitFailure;
  } catch (const NumericFailure& e) {
    std::cerr << "fit failed: " << e.what() << '\n';
    return cli::kExitFitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
