// SPDX-License-Identifier: Apache-2.0
//
// File formats: CSV datasets and tables, JSON checkpoints, posterior files and
// manifests with SHA-256 artifact hashes.

#ifndef SPARSEINF_IO_HPP
#define SPARSEINF_IO_HPP

#include "sparseinf/data.hpp"
#include "sparseinf/fisher.hpp"
#include "sparseinf/net.hpp"
#include "sparseinf/posterior.hpp"
#include "sparseinf/sparse.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sparseinf {

using Json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

/// 17 significant digits; round-trips every finite double.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories. Throws IoError when the file cannot be written.
void write_text_file(const std::filesystem::path& path, std::string_view content);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_string() const;
  static CsvTable parse(std::string_view text);
  std::size_t column(std::string_view name) const;
};

/// Header x_0..x_{d-1},y (y_0.. for several outputs) or x_0..x_{d-1},label.
std::string dataset_to_csv(const Dataset& d);
Dataset dataset_from_csv(std::string_view text);
void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);
Json to_json(const PosteriorConfig& c);
PosteriorConfig posterior_config_from_json(const Json& j);

struct Checkpoint {
  NetworkSpec spec;
  TrainConfig train;
  Weights weights;
  std::vector<double> loss_trace;
};

Json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j);

Json to_json(const KronEigenbasis& b);
KronEigenbasis eigenbasis_from_json(const Json& j);
Json to_json(const SparseInfoForm& f);
SparseInfoForm info_form_from_json(const Json& j);
Json to_json(const LayerReport& r);

/// Everything needed to rebuild a Posterior deterministically.
struct PosteriorFile {
  Checkpoint model;
  PosteriorConfig config;
  double sigma_alea = 0.0;
  std::vector<KronEigenbasis> bases;
};

Json to_json(const PosteriorFile& p);
PosteriorFile posterior_file_from_json(const Json& j);
Posterior rebuild_posterior(const PosteriorFile& p);

/// Throws IoError when schema_version is missing or unsupported, or `kind`
/// differs from the expected one.
void check_schema(const Json& j, std::string_view kind);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

std::string file_sha256(const std::filesystem::path& path);

/// Run record: stages in order, artifacts with hashes relative to `dir`.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed);
  Json& stage(const std::string& name, const std::string& status = "ok");
  void add_artifact(const std::filesystem::path& dir, const std::string& relative);
  void set(const std::string& key, Json value);
  void fail(const std::string& stage_name, const std::string& message);
  const Json& json() const noexcept { return j_; }
  void write(const std::filesystem::path& dir) const;

 private:
  Json j_;
};

/// Recomputes every artifact hash of the manifest in `dir`; returns the
/// names that are missing or differ.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path);

}  // namespace sparseinf

#endif  // SPARSEINF_IO_HPP
