#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "slab/error.hpp"
#include "slab/io.hpp"

namespace slab {

inline constexpr const char* kLossTableHeader =
    "run_id,n_params_total,n_params_nonembed,tokens,loss,dataset_tag,arch_tag,lr,seed";

struct LossRow {
  std::string run_id;
  double n_params_total = 0.0;
  double n_params_nonembed = 0.0;
  double tokens = 0.0;
  double loss = 0.0;
  std::string dataset_tag;
  std::string arch_tag;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  bool operator==(const LossRow&) const = default;
};

enum class ParamAxis { kTotal, kNonEmbedding };

struct LossPoint {
  double n = 0.0;
  double d = 0.0;
  double loss = 0.0;
};

struct LossTable {
  std::vector<LossRow> rows;
  std::vector<std::string> warnings;

  double n_of(const LossRow& r, ParamAxis axis) const {
    return axis == ParamAxis::kTotal ? r.n_params_total : r.n_params_nonembed;
  }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& r : rows) {
      if (!(r.n_params_total > 0.0) || !(r.n_params_nonembed > 0.0) || !(r.tokens > 0.0) || !(r.loss > 0.0) ||
          !std::isfinite(r.loss) || !std::isfinite(r.tokens) || !std::isfinite(r.n_params_total))
        throw InvalidArgument("loss table: run " + r.run_id + " has a non-positive or non-finite N, D or loss");
      if (!ids.insert(r.run_id).second) throw InvalidArgument("loss table: duplicate run_id " + r.run_id);
    }
  }
};

// Source column names for each field; empty means the column is absent.
struct SchemaMap {
  std::string run_id = "run_id";
  std::string n_params_total = "n_params_total";
  std::string n_params_nonembed = "n_params_nonembed";
  std::string tokens = "tokens";
  std::string loss = "loss";
  std::string dataset_tag = "dataset_tag";
  std::string arch_tag = "arch_tag";
  std::string lr = "lr";
  std::string seed = "seed";

  // Layout of the public extracted Chinchilla table.
  static SchemaMap epoch_chinchilla() {
    SchemaMap m;
    m.run_id.clear();
    m.n_params_total = "Model Size";
    m.n_params_nonembed.clear();
    m.tokens = "Training Tokens";
    m.loss = "loss";
    m.dataset_tag.clear();
    m.arch_tag.clear();
    m.lr.clear();
    m.seed.clear();
    return m;
  }

  // Parses "field=column,field=column"; unknown fields are an error.
  static SchemaMap parse(const std::string& text) {
    SchemaMap m;
    std::map<std::string, std::string*> fields{{"run_id", &m.run_id},
                                               {"n_params_total", &m.n_params_total},
                                               {"n_params_nonembed", &m.n_params_nonembed},
                                               {"tokens", &m.tokens},
                                               {"loss", &m.loss},
                                               {"dataset_tag", &m.dataset_tag},
                                               {"arch_tag", &m.arch_tag},
                                               {"lr", &m.lr},
                                               {"seed", &m.seed}};
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InvalidArgument("schema map: expected field=column, got '" + item + "'");
      const auto key = io::trim(item.substr(0, eq));
      const auto it = fields.find(key);
      if (it == fields.end()) throw InvalidArgument("schema map: unknown field '" + key + "'");
      *it->second = io::trim(item.substr(eq + 1));
    }
    return m;
  }
};

namespace detail {

inline double parse_number(const std::string& s, const char* what, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw IoError("line " + std::to_string(line) + ": " + what + " '" + s + "' is not a number");
  return v;
}

}  // namespace detail

struct IngestOptions {
  SchemaMap schema;
  std::string default_dataset_tag;
};

// Reads a loss CSV through `schema`. Every malformed line is reported, with
// its line number, in one IoError.
inline LossTable read_loss_table(std::istream& in, const IngestOptions& opt = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (io::trim(line).empty()) continue;
    header = io::split_csv(line);
    break;
  }
  if (header.empty()) throw IoError("loss table: file is empty");
  for (auto& h : header) h = io::trim(h);

  auto column = [&](const std::string& name, const char* field, bool required) -> std::optional<std::size_t> {
    if (name.empty()) {
      if (required) throw InvalidArgument(std::string("schema map: required field ") + field + " has no column");
      return std::nullopt;
    }
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw IoError("loss table: missing column '" + name + "' for " + field);
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto& s = opt.schema;
  const auto c_id = column(s.run_id, "run_id", false);
  const auto c_n = column(s.n_params_total, "n_params_total", true);
  const auto c_ne = column(s.n_params_nonembed, "n_params_nonembed", false);
  const auto c_d = column(s.tokens, "tokens", true);
  const auto c_loss = column(s.loss, "loss", true);
  const auto c_ds = column(s.dataset_tag, "dataset_tag", false);
  const auto c_arch = column(s.arch_tag, "arch_tag", false);
  const auto c_lr = column(s.lr, "lr", false);
  const auto c_seed = column(s.seed, "seed", false);

  LossTable table;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (io::trim(line).empty()) continue;
    try {
      const auto f = io::split_csv(line);
      if (f.size() != header.size())
        throw IoError("line " + std::to_string(line_no) + ": " + std::to_string(f.size()) + " fields, header has " +
                      std::to_string(header.size()));
      auto field = [&](std::size_t c) { return io::trim(f[c]); };
      LossRow r;
      r.run_id = c_id && !field(*c_id).empty() ? field(*c_id) : "row" + std::to_string(line_no);
      r.n_params_total = detail::parse_number(field(*c_n), "n_params_total", line_no);
      r.n_params_nonembed =
          c_ne && !field(*c_ne).empty() ? detail::parse_number(field(*c_ne), "n_params_nonembed", line_no)
                                        : r.n_params_total;
      r.tokens = detail::parse_number(field(*c_d), "tokens", line_no);
      r.loss = detail::parse_number(field(*c_loss), "loss", line_no);
      r.dataset_tag = c_ds && !field(*c_ds).empty() ? field(*c_ds) : opt.default_dataset_tag;
      r.arch_tag = c_arch ? field(*c_arch) : std::string();
      if (c_lr && !field(*c_lr).empty()) r.lr = detail::parse_number(field(*c_lr), "lr", line_no);
      if (c_seed && !field(*c_seed).empty()) {
        const double sd = detail::parse_number(field(*c_seed), "seed", line_no);
        if (sd < 0 || sd != std::floor(sd)) throw IoError("line " + std::to_string(line_no) + ": seed must be a non-negative integer");
        r.seed = static_cast<std::uint64_t>(sd);
      }
      if (!(r.n_params_total > 0.0) || !(r.n_params_nonembed > 0.0) || !(r.tokens > 0.0) || !(r.loss > 0.0) ||
          !std::isfinite(r.loss))
        throw IoError("line " + std::to_string(line_no) + ": N, D and loss must be positive and finite");
      table.rows.push_back(std::move(r));
    } catch (const IoError& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "loss table: " + std::to_string(errors.size()) + " malformed row(s)";
    for (const auto& e : errors) msg += "\n  " + e;
    throw IoError(msg);
  }
  if (table.rows.empty()) throw IoError("loss table: no data rows");
  if (!c_ne) table.warnings.push_back("no non-embedding parameter column; using total parameters");
  std::set<std::string> ids;
  for (const auto& r : table.rows)
    if (!ids.insert(r.run_id).second) throw IoError("loss table: duplicate run_id " + r.run_id);
  return table;
}

inline LossTable read_loss_table(const std::string& path, const IngestOptions& opt = {}) {
  auto in = io::open_in(path);
  return read_loss_table(in, opt);
}

namespace detail {

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline void write_loss_table(std::ostream& out, const LossTable& table) {
  out << kLossTableHeader << '\n';
  for (const auto& r : table.rows) {
    out << detail::csv_field(r.run_id) << ',' << detail::format_number(r.n_params_total) << ','
        << detail::format_number(r.n_params_nonembed) << ',' << detail::format_number(r.tokens) << ','
        << detail::format_number(r.loss) << ',' << detail::csv_field(r.dataset_tag) << ','
        << detail::csv_field(r.arch_tag) << ',' << (r.lr ? detail::format_number(*r.lr) : "") << ','
        << (r.seed ? std::to_string(*r.seed) : "") << '\n';
  }
}

inline void write_loss_table(const std::string& path, const LossTable& table) {
  auto out = io::open_out(path, false);
  write_loss_table(out, table);
}

// Keeps the first row for each repeated (N, D, lr, seed).
inline LossTable dedup_runs(const LossTable& table) {
  using Key = std::tuple<double, double, double, std::optional<double>, std::optional<std::uint64_t>>;
  std::set<Key> seen;
  LossTable out;
  out.warnings = table.warnings;
  std::size_t dropped = 0;
  for (const auto& r : table.rows) {
    if (seen.insert(Key{r.n_params_total, r.n_params_nonembed, r.tokens, r.lr, r.seed}).second) out.rows.push_back(r);
    else ++dropped;
  }
  if (dropped > 0)
    out.warnings.push_back(std::to_string(dropped) + " duplicate (N, D, lr, seed) row(s) dropped; first occurrence kept");
  return out;
}

// One row per (N, D): the lowest loss over learning rates, seeds and any
// other hyperparameters present.
inline LossTable minimize_over_hparams(const LossTable& table, ParamAxis axis = ParamAxis::kTotal) {
  std::map<std::pair<double, double>, std::size_t> best;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const auto key = std::make_pair(table.n_of(r, axis), r.tokens);
    const auto it = best.find(key);
    if (it == best.end() || r.loss < table.rows[it->second].loss) best[key] = i;
  }
  std::vector<std::size_t> keep;
  for (const auto& [key, i] : best) keep.push_back(i);
  std::sort(keep.begin(), keep.end());
  LossTable out;
  out.warnings = table.warnings;
  for (auto i : keep) out.rows.push_back(table.rows[i]);
  return out;
}

// Removes the k rows with the largest loss (ties broken by file order).
inline LossTable drop_largest_losses(const LossTable& table, std::size_t k) {
  if (k >= table.rows.size() && k > 0)
    throw InvalidArgument("drop_largest_losses: dropping " + std::to_string(k) + " of " +
                          std::to_string(table.rows.size()) + " rows leaves nothing");
  std::vector<std::size_t> order(table.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return table.rows[a].loss > table.rows[b].loss; });
  std::vector<bool> drop(table.rows.size(), false);
  for (std::size_t i = 0; i < k; ++i) drop[order[i]] = true;
  LossTable out;
  out.warnings = table.warnings;
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    if (!drop[i]) out.rows.push_back(table.rows[i]);
  return out;
}

// Full ingest pipeline: dedup, per-(N, D) minimum, outlier drop.
inline LossTable normalize_table(const LossTable& raw, std::size_t drop_largest = 0,
                                 ParamAxis axis = ParamAxis::kTotal) {
  auto t = minimize_over_hparams(dedup_runs(raw), axis);
  if (drop_largest > 0) t = drop_largest_losses(t, drop_largest);
  t.validate();
  return t;
}

inline std::vector<LossPoint> loss_points(const LossTable& table, ParamAxis axis = ParamAxis::kTotal) {
  std::vector<LossPoint> pts;
  pts.reserve(table.rows.size());
  for (const auto& r : table.rows) pts.push_back({table.n_of(r, axis), r.tokens, r.loss});
  return pts;
}

}  // namespace slab
