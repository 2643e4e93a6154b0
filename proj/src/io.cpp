// SPDX-License-Identifier: Apache-2.0

#include "sparseinf/io.hpp"

#include "sparseinf/errors.hpp"
#include "sparseinf/hash.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;

namespace sparseinf {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw IoError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw ContractViolation("CsvTable: row width differs from header");
  rows.push_back(std::move(row));
}

namespace {

void append_line(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

std::string CsvTable::to_string() const {
  std::string out;
  append_line(out, header);
  for (const auto& r : rows) append_line(out, r);
  return out;
}

CsvTable CsvTable::parse(std::string_view text) {
  CsvTable t;
  bool first = true;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (first) {
      t.header = split(line);
      first = false;
    } else {
      auto cells = split(line);
      if (cells.size() != t.header.size()) throw IoError("CSV row has " + std::to_string(cells.size()) + " cells, header has " + std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw IoError("CSV has no header");
  return t;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw IoError("CSV has no column '" + std::string(name) + "'");
}

std::string dataset_to_csv(const Dataset& d) {
  CsvTable t;
  for (Eigen::Index c = 0; c < d.x.cols(); ++c) t.header.push_back("x_" + std::to_string(c));
  if (d.classification) {
    t.header.push_back("label");
  } else if (d.y.cols() == 1) {
    t.header.push_back("y");
  } else {
    for (Eigen::Index c = 0; c < d.y.cols(); ++c) t.header.push_back("y_" + std::to_string(c));
  }
  for (Eigen::Index r = 0; r < d.x.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < d.x.cols(); ++c) row.push_back(format_double(d.x(r, c)));
    if (d.classification) {
      row.push_back(std::to_string(d.labels[static_cast<std::size_t>(r)]));
    } else {
      for (Eigen::Index c = 0; c < d.y.cols(); ++c) row.push_back(format_double(d.y(r, c)));
    }
    t.add_row(std::move(row));
  }
  return t.to_string();
}

Dataset dataset_from_csv(std::string_view text) {
  const CsvTable t = CsvTable::parse(text);
  std::vector<std::size_t> xs, ys;
  std::optional<std::size_t> label;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const std::string& h = t.header[i];
    if (h.rfind("x_", 0) == 0) {
      xs.push_back(i);
    } else if (h == "y" || h.rfind("y_", 0) == 0) {
      ys.push_back(i);
    } else if (h == "label") {
      label = i;
    } else {
      throw IoError("unexpected dataset column '" + h + "'");
    }
  }
  if (xs.empty()) throw IoError("dataset CSV needs x_ columns");
  if (label.has_value() == !ys.empty()) throw IoError("dataset CSV needs either y columns or a label column");
  Dataset d;
  d.classification = label.has_value();
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  d.x.resize(n, static_cast<Eigen::Index>(xs.size()));
  if (!d.classification) d.y.resize(n, static_cast<Eigen::Index>(ys.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < xs.size(); ++c) d.x(r, static_cast<Eigen::Index>(c)) = parse_double(row[xs[c]]);
    if (d.classification) {
      int v = 0;
      const std::string& s = row[*label];
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) throw IoError("bad label '" + s + "'");
      d.labels.push_back(v);
    } else {
      for (std::size_t c = 0; c < ys.size(); ++c) d.y(r, static_cast<Eigen::Index>(c)) = parse_double(row[ys[c]]);
    }
  }
  return d;
}

void save_dataset(const fs::path& path, const Dataset& d) { write_text_file(path, dataset_to_csv(d)); }

Dataset load_dataset(const fs::path& path) { return dataset_from_csv(read_text_file(path)); }

Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw IoError("matrix JSON: data length does not match shape");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

Json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const Json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

namespace {

// JSON has no infinity; encode non-finite entries as strings.
Json vector_to_json_nonfinite(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      arr.push_back(v(i));
    } else {
      arr.push_back(format_double(v(i)));
    }
  }
  return arr;
}

Vector vector_from_json_nonfinite(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = j[i].is_string() ? parse_double(j[i].get<std::string>()) : j[i].get<double>();
  }
  return v;
}

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw IoError("unknown optimizer '" + s + "'");
}

std::string to_string(LabelMode m) { return m == LabelMode::empirical ? "empirical" : "model_sampled"; }

}  // namespace

Json to_json(const NetworkSpec& spec) {
  Json j;
  j["layer_sizes"] = spec.layer_sizes;
  j["activation"] = to_string(spec.activation);
  j["loss"] = to_string(spec.loss);
  return j;
}

NetworkSpec network_spec_from_json(const Json& j) {
  NetworkSpec s;
  s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.loss = parse_loss(j.at("loss").get<std::string>());
  s.validate();
  return s;
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["optimizer"] = to_string(c.optimizer);
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.optimizer = parse_optimizer(j.value("optimizer", std::string("adam")));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  return c;
}

Json to_json(const PosteriorConfig& c) {
  Json j;
  j["estimator"] = to_string(c.estimator);
  j["n_scale"] = c.n_scale;
  j["tau"] = c.effective_tau();
  j["rank"] = c.rank.to_string();
  j["k_mc"] = c.k_mc;
  j["degenerate_policy"] = to_string(c.policy);
  j["label_mode"] = to_string(c.label_mode);
  j["eps"] = c.eps;
  if (c.rank_budget) {
    j["rank_budget"] = *c.rank_budget;
  } else {
    j["rank_budget"] = nullptr;
  }
  return j;
}

PosteriorConfig posterior_config_from_json(const Json& j) {
  PosteriorConfig c;
  c.estimator = parse_estimator(j.value("estimator", std::string("inf")));
  c.n_scale = j.value("n_scale", c.n_scale);
  if (j.contains("tau") && !j["tau"].is_null()) c.tau = j["tau"].get<double>();
  c.rank = RankSpec::parse(j.value("rank", std::string("full")));
  c.k_mc = j.value("k_mc", c.k_mc);
  c.policy = parse_policy(j.value("degenerate_policy", std::string("deterministic_dims")));
  c.label_mode = parse_label_mode(j.value("label_mode", std::string("model_sampled")));
  c.eps = j.value("eps", c.eps);
  if (j.contains("rank_budget") && !j["rank_budget"].is_null()) c.rank_budget = j["rank_budget"].get<std::size_t>();
  c.validate();
  return c;
}

Json to_json(const Checkpoint& c) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "checkpoint";
  j["spec"] = to_json(c.spec);
  j["train"] = to_json(c.train);
  Json layers = Json::array();
  for (const Matrix& w : c.weights.layers) layers.push_back(matrix_to_json(w));
  j["weights"] = layers;
  j["loss_trace"] = c.loss_trace;
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  check_schema(j, "checkpoint");
  Checkpoint c;
  c.spec = network_spec_from_json(j.at("spec"));
  c.train = train_config_from_json(j.at("train"));
  for (const Json& w : j.at("weights")) c.weights.layers.push_back(matrix_from_json(w));
  c.loss_trace = j.value("loss_trace", std::vector<double>{});
  try {
    validate_weights(c.spec, c.weights);
  } catch (const ContractViolation& e) {
    throw IoError(std::string("checkpoint weights: ") + e.what());
  }
  return c;
}

Json to_json(const KronEigenbasis& b) {
  Json j;
  j["U_A"] = matrix_to_json(b.U_A);
  j["U_G"] = matrix_to_json(b.U_G);
  j["s_A"] = vector_to_json(b.s_A);
  j["s_G"] = vector_to_json(b.s_G);
  j["lambda"] = vector_to_json(b.lambda);
  j["exact_diag"] = vector_to_json(b.exact_diag);
  j["D"] = vector_to_json(b.D);
  j["count"] = b.count;
  return j;
}

KronEigenbasis eigenbasis_from_json(const Json& j) {
  KronEigenbasis b;
  b.U_A = matrix_from_json(j.at("U_A"));
  b.U_G = matrix_from_json(j.at("U_G"));
  b.s_A = vector_from_json(j.at("s_A"));
  b.s_G = vector_from_json(j.at("s_G"));
  b.lambda = vector_from_json(j.at("lambda"));
  b.exact_diag = vector_from_json(j.at("exact_diag"));
  b.D = vector_from_json(j.at("D"));
  b.count = j.at("count").get<std::size_t>();
  const auto N = static_cast<Eigen::Index>(b.size());
  if (b.U_A.rows() != b.U_A.cols() || b.U_G.rows() != b.U_G.cols() || b.lambda.size() != N ||
      b.exact_diag.size() != N || b.D.size() != N) {
    throw IoError("eigenbasis JSON: inconsistent shapes");
  }
  return b;
}

Json to_json(const SparseInfoForm& f) {
  Json j;
  j["U_a"] = matrix_to_json(f.U_a);
  j["U_g"] = matrix_to_json(f.U_g);
  j["lambda_L"] = vector_to_json(f.lambda_L);
  j["D"] = vector_to_json_nonfinite(f.D);
  j["exact_diag"] = vector_to_json(f.exact_diag);
  j["kept_A"] = f.kept_A;
  j["kept_G"] = f.kept_G;
  j["K_requested"] = f.K_requested;
  j["active"] = f.active;
  return j;
}

SparseInfoForm info_form_from_json(const Json& j) {
  SparseInfoForm f;
  f.U_a = matrix_from_json(j.at("U_a"));
  f.U_g = matrix_from_json(j.at("U_g"));
  f.lambda_L = vector_from_json(j.at("lambda_L"));
  f.D = vector_from_json_nonfinite(j.at("D"));
  f.exact_diag = vector_from_json(j.at("exact_diag"));
  f.kept_A = j.at("kept_A").get<std::vector<std::size_t>>();
  f.kept_G = j.at("kept_G").get<std::vector<std::size_t>>();
  f.K_requested = j.at("K_requested").get<std::size_t>();
  f.active = j.at("active").get<std::vector<std::size_t>>();
  if (f.lambda_L.size() != f.U_a.cols() * f.U_g.cols() || f.D.size() != static_cast<Eigen::Index>(f.size())) {
    throw IoError("information form JSON: inconsistent shapes");
  }
  return f;
}

Json to_json(const LayerReport& r) {
  Json j;
  j["N"] = r.N;
  j["K"] = r.K;
  j["L"] = r.L;
  j["over_budget"] = r.over_budget;
  if (r.verdict) {
    j["verdict"] = to_string(*r.verdict);
  } else {
    j["verdict"] = nullptr;
  }
  j["deterministic_dims"] = r.deterministic;
  j["clipped"] = r.clipped;
  j["form_hash"] = r.form_hash;
  j["theta_hash"] = r.theta_hash;
  return j;
}

Json to_json(const PosteriorFile& p) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "posterior";
  j["model"] = to_json(p.model);
  j["config"] = to_json(p.config);
  j["sigma_alea"] = p.sigma_alea;
  Json bases = Json::array();
  for (const KronEigenbasis& b : p.bases) bases.push_back(to_json(b));
  j["eigenbases"] = bases;
  return j;
}

PosteriorFile posterior_file_from_json(const Json& j) {
  check_schema(j, "posterior");
  PosteriorFile p;
  p.model = checkpoint_from_json(j.at("model"));
  p.config = posterior_config_from_json(j.at("config"));
  p.sigma_alea = j.at("sigma_alea").get<double>();
  for (const Json& b : j.at("eigenbases")) p.bases.push_back(eigenbasis_from_json(b));
  if (p.bases.size() != p.model.spec.num_layers()) throw IoError("posterior JSON: one eigenbasis per layer needed");
  return p;
}

Posterior rebuild_posterior(const PosteriorFile& p) {
  return build_posterior(p.model.spec, p.model.weights, p.bases, p.config, p.sigma_alea);
}

void check_schema(const Json& j, std::string_view kind) {
  if (!j.is_object() || !j.contains("schema_version")) throw IoError("missing schema_version");
  const int v = j["schema_version"].get<int>();
  if (v != kSchemaVersion) throw IoError("unsupported schema_version " + std::to_string(v));
  if (j.value("kind", std::string()) != kind) {
    throw IoError("expected a " + std::string(kind) + " file, got '" + j.value("kind", std::string()) + "'");
  }
}

Json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string file_sha256(const fs::path& path) { return sha256_hex(read_text_file(path)); }

Manifest::Manifest(std::string command, std::uint64_t seed) {
  j_["schema_version"] = kSchemaVersion;
  j_["kind"] = "manifest";
  j_["command"] = std::move(command);
  j_["seed"] = seed;
  j_["status"] = "ok";
  j_["stages"] = Json::array();
  j_["artifacts"] = Json::object();
}

Json& Manifest::stage(const std::string& name, const std::string& status) {
  Json s;
  s["name"] = name;
  s["status"] = status;
  j_["stages"].push_back(s);
  return j_["stages"].back();
}

void Manifest::add_artifact(const fs::path& dir, const std::string& relative) {
  j_["artifacts"][relative] = file_sha256(dir / relative);
}

void Manifest::set(const std::string& key, Json value) { j_[key] = std::move(value); }

void Manifest::fail(const std::string& stage_name, const std::string& message) {
  Json& s = stage(stage_name, "failed");
  s["error"] = message;
  j_["status"] = "failed";
  j_["failed_stage"] = stage_name;
}

void Manifest::write(const fs::path& dir) const { write_json_file(dir / "manifest.json", j_); }

std::vector<std::string> verify_manifest(const fs::path& manifest_path) {
  const Json j = read_json_file(manifest_path);
  check_schema(j, "manifest");
  const fs::path dir = manifest_path.parent_path();
  std::vector<std::string> bad;
  for (const auto& [name, hash] : j.at("artifacts").items()) {
    const fs::path p = dir / name;
    std::error_code ec;
    if (!fs::exists(p, ec) || file_sha256(p) != hash.get<std::string>()) bad.push_back(name);
  }
  return bad;
}

}  // namespace sparseinf
