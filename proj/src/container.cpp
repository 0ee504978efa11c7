#include "lastomo/container.hpp"

#include "lastomo/errors.hpp"
#include "lastomo/image_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace lastomo {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'A', 'S', 'T', 'O', 'M', 'O', '\0'};

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

class Cursor {
 public:
  explicit Cursor(const std::string& b) : b_(b) {}

  template <typename U>
  U take(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) {
      v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + k])) << (8 * k);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::uint64_t n, const char* what) const {
    if (n > b_.size() - pos_) {
      throw FormatError("truncated container at offset " + std::to_string(pos_) + ": need " +
                        std::to_string(n) + " bytes for " + what + ", " +
                        std::to_string(b_.size() - pos_) + " left");
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t left() const { return b_.size() - pos_; }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

std::uint64_t to_u64(double v) { return static_cast<std::uint64_t>(v); }

}  // namespace

std::string_view to_string(ContainerKind k) {
  switch (k) {
    case ContainerKind::Dataset: return "dataset";
    case ContainerKind::Checkpoint: return "checkpoint";
    case ContainerKind::Matrix: return "matrix";
  }
  return "unknown";
}

std::uint64_t NamedTensor::numel() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const NamedTensor* Container::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& Container::get(const std::string& name) const {
  const NamedTensor* t = find(name);
  if (!t) throw FormatError(std::string(to_string(kind)) + " container has no tensor '" + name + "'");
  return *t;
}

void Container::add(std::string name, std::vector<std::uint64_t> dims, std::vector<double> data) {
  NamedTensor t{std::move(name), std::move(dims), std::move(data)};
  if (t.numel() != t.data.size()) throw DimensionError("tensor '" + t.name + "' dims do not match data");
  tensors.push_back(std::move(t));
}

void Container::add(std::string name, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<double> d(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) d[r * m.cols() + c] = m(r, c);
  }
  add(std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
      std::move(d));
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
  const NamedTensor& t = get(name);
  if (t.dims.size() != 2) throw FormatError("tensor '" + name + "' is not a matrix");
  Eigen::MatrixXd m(t.dims[0], t.dims[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.data[r * m.cols() + c];
  }
  return m;
}

Eigen::VectorXd Container::vector(const std::string& name) const {
  const NamedTensor& t = get(name);
  if (t.dims.size() != 1 && !(t.dims.size() == 2 && t.dims[1] == 1)) {
    throw FormatError("tensor '" + name + "' is not a vector");
  }
  return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

std::string serialize(const Container& c) {
  std::string out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
  const std::string meta = c.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out += meta;
  put<std::uint64_t>(out, c.tensors.size());
  for (const auto& t : c.tensors) {
    if (t.numel() != t.data.size()) throw DimensionError("tensor '" + t.name + "' dims do not match data");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    out.reserve(out.size() + 8 * t.data.size());
    for (double v : t.data) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Container deserialize(const std::string& bytes, std::optional<ContainerKind> expect) {
  Cursor cur(bytes);
  if (cur.bytes(8, "magic") != std::string(kMagic, kMagic + 8)) {
    throw FormatError("bad magic at offset 0: not a lastomo container");
  }
  const auto version = cur.take<std::uint32_t>("version");
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version) + " at offset 8 (expected " +
                      std::to_string(kContainerVersion) + ")");
  }
  const auto kind_raw = cur.take<std::uint32_t>("kind");
  if (kind_raw < 1 || kind_raw > 3) {
    throw FormatError("unknown container kind " + std::to_string(kind_raw) + " at offset 12");
  }
  Container c;
  c.kind = static_cast<ContainerKind>(kind_raw);
  if (expect && *expect != c.kind) {
    throw FormatError("container kind mismatch: expected " + std::string(to_string(*expect)) +
                      ", found " + std::string(to_string(c.kind)));
  }
  const auto meta_len = cur.take<std::uint64_t>("metadata length");
  const std::size_t meta_at = cur.pos();
  const std::string meta = cur.bytes(meta_len, "metadata");
  try {
    c.metadata = json::parse(meta);
  } catch (const json::parse_error& e) {
    throw FormatError("metadata at offset " + std::to_string(meta_at) + " is not valid JSON: " + e.what());
  }
  const auto n = cur.take<std::uint64_t>("tensor count");
  for (std::uint64_t k = 0; k < n; ++k) {
    NamedTensor t;
    const auto name_len = cur.take<std::uint32_t>("tensor name length");
    t.name = cur.bytes(name_len, "tensor name");
    const std::size_t rank_at = cur.pos();
    const auto rank = cur.take<std::uint32_t>("tensor rank");
    if (rank > 8) {
      throw FormatError("tensor '" + t.name + "' has implausible rank " + std::to_string(rank) +
                        " at offset " + std::to_string(rank_at));
    }
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.dims.push_back(cur.take<std::uint64_t>("tensor dims"));
      if (t.dims.back() != 0 && numel > std::numeric_limits<std::uint64_t>::max() / 8 / t.dims.back()) {
        throw FormatError("tensor '" + t.name + "' size overflows at offset " + std::to_string(cur.pos()));
      }
      numel *= t.dims.back();
    }
    cur.need(numel * 8, "tensor data");
    t.data.resize(numel);
    for (auto& v : t.data) v = std::bit_cast<double>(cur.take<std::uint64_t>("tensor data"));
    c.tensors.push_back(std::move(t));
  }
  if (cur.left() != 0) {
    throw FormatError("trailing bytes after the last tensor at offset " + std::to_string(cur.pos()));
  }
  return c;
}

void save_container(const Container& c, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(c));
}

Container load_container(const std::filesystem::path& path, std::optional<ContainerKind> expect) {
  try {
    return deserialize(read_file(path), expect);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- dataset ---------------------------------------------------------------

namespace {
constexpr int kBlobFields = 7;
constexpr int kMaxBlobs = 2;
}  // namespace

Container dataset_to_container(const Dataset& ds, const PipelineConfig& config) {
  if (ds.samples.empty()) throw ConfigError("dataset is empty");
  Container c;
  c.kind = ContainerKind::Dataset;
  c.metadata = {{"master_seed", ds.master_seed},
                {"seed_streams", {{"blob", "derive_seed(master, \"blob\", index)"},
                                  {"split", "derive_seed(master, \"split\")"}}},
                {"counts", to_json(ds.counts)},
                {"phantom", to_json(ds.params)},
                {"lines", json::array({to_json(config.lines[0]), to_json(config.lines[1])})},
                {"pressure_atm", config.pressure_atm},
                {"mesh", to_json(config.mesh)},
                {"beams", to_json(config.beams)},
                {"absorbance_units", "dimensionless, chord lengths in cm"},
                {"snr_rule", "sigma = RMS(A) * 10^(-snr_db/20), RMS over the beam entries of one transition"},
                {"stored_noise", "none"},
                {"blob_fields", {"x_c", "y_c", "sigma_x", "sigma_y", "scale", "temp_amp", "conc_amp"}}};
  const auto n = static_cast<std::uint64_t>(ds.samples.size());
  const auto nb = static_cast<std::uint64_t>(ds.samples.front().a1.size());
  const auto nc = static_cast<std::uint64_t>(ds.samples.front().t.size());
  std::vector<double> a1, a2, t, blobs, n_blobs, split, index, seed_hi, seed_lo;
  a1.reserve(n * nb);
  a2.reserve(n * nb);
  t.reserve(n * nc);
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const Sample& s = ds.samples[k];
    if (static_cast<std::uint64_t>(s.a1.size()) != nb || static_cast<std::uint64_t>(s.t.size()) != nc) {
      throw DimensionError("dataset samples differ in size");
    }
    a1.insert(a1.end(), s.a1.data(), s.a1.data() + nb);
    a2.insert(a2.end(), s.a2.data(), s.a2.data() + nb);
    t.insert(t.end(), s.t.data(), s.t.data() + nc);
    if (s.blobs.empty() || s.blobs.size() > kMaxBlobs) throw DimensionError("sample blob count must be 1 or 2");
    for (int l = 0; l < kMaxBlobs; ++l) {
      if (l < static_cast<int>(s.blobs.size())) {
        const auto& b = s.blobs[l];
        for (double v : {b.x_c, b.y_c, b.sigma_x, b.sigma_y, b.scale, b.temp_amp, b.conc_amp}) {
          blobs.push_back(v);
        }
      } else {
        blobs.insert(blobs.end(), kBlobFields, std::numeric_limits<double>::quiet_NaN());
      }
    }
    n_blobs.push_back(static_cast<double>(s.blobs.size()));
    split.push_back(static_cast<double>(ds.split[k]));
    index.push_back(static_cast<double>(s.index));
    seed_hi.push_back(static_cast<double>(s.seed >> 32));
    seed_lo.push_back(static_cast<double>(s.seed & 0xffffffffULL));
  }
  c.add("A1", {n, nb}, std::move(a1));
  c.add("A2", {n, nb}, std::move(a2));
  c.add("T", {n, nc}, std::move(t));
  c.add("blobs", {n, kMaxBlobs, kBlobFields}, std::move(blobs));
  c.add("n_blobs", {n}, std::move(n_blobs));
  c.add("split", {n}, std::move(split));
  c.add("index", {n}, std::move(index));
  c.add("seed_hi", {n}, std::move(seed_hi));
  c.add("seed_lo", {n}, std::move(seed_lo));
  return c;
}

Dataset dataset_from_container(const Container& c) {
  if (c.kind != ContainerKind::Dataset) throw FormatError("container is not a dataset");
  Dataset ds;
  try {
    ds.master_seed = c.metadata.at("master_seed").get<std::uint64_t>();
    ds.counts = counts_from_json(c.metadata.at("counts"));
    ds.params = phantom_from_json(c.metadata.at("phantom"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset metadata: ") + e.what());
  }
  const NamedTensor& a1 = c.get("A1");
  const NamedTensor& a2 = c.get("A2");
  const NamedTensor& t = c.get("T");
  const NamedTensor& blobs = c.get("blobs");
  const NamedTensor& nbl = c.get("n_blobs");
  const NamedTensor& split = c.get("split");
  const NamedTensor& index = c.get("index");
  const NamedTensor& hi = c.get("seed_hi");
  const NamedTensor& lo = c.get("seed_lo");
  if (a1.dims.size() != 2 || t.dims.size() != 2) throw FormatError("dataset tensors have the wrong rank");
  const std::uint64_t n = a1.dims[0], nb = a1.dims[1], nc = t.dims[1];
  const bool ok = a2.dims == a1.dims && t.dims[0] == n &&
                  blobs.dims == std::vector<std::uint64_t>{n, kMaxBlobs, kBlobFields} &&
                  nbl.numel() == n && split.numel() == n && index.numel() == n && hi.numel() == n &&
                  lo.numel() == n;
  if (!ok) throw FormatError("dataset tensors disagree on the sample count");
  ds.samples.resize(n);
  ds.split.resize(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    Sample& s = ds.samples[k];
    s.index = static_cast<std::int64_t>(index.data[k]);
    s.seed = (to_u64(hi.data[k]) << 32) | to_u64(lo.data[k]);
    s.a1 = Eigen::Map<const Eigen::VectorXd>(a1.data.data() + k * nb, nb);
    s.a2 = Eigen::Map<const Eigen::VectorXd>(a2.data.data() + k * nb, nb);
    s.t = Eigen::Map<const Eigen::VectorXd>(t.data.data() + k * nc, nc);
    const int count = static_cast<int>(nbl.data[k]);
    if (count < 1 || count > kMaxBlobs) throw FormatError("sample " + std::to_string(k) + " has a bad blob count");
    for (int l = 0; l < count; ++l) {
      const double* f = blobs.data.data() + (k * kMaxBlobs + l) * kBlobFields;
      s.blobs.push_back({f[0], f[1], f[2], f[3], f[4], f[5], f[6]});
    }
    const double sp = split.data[k];
    if (sp != 0.0 && sp != 1.0) throw FormatError("sample " + std::to_string(k) + " has a bad split label");
    ds.split[k] = sp == 0.0 ? Split::Train : Split::Test;
  }
  return ds;
}

// ---- checkpoint ------------------------------------------------------------

Container checkpoint_to_container(const ModelParams& model, const ArchOptions& arch,
                                  const TrainConfig& train, std::uint64_t geometry_fingerprint) {
  Container c;
  c.kind = ContainerKind::Checkpoint;
  c.metadata = {{"arch", std::string(to_string(model.spec.arch))},
                {"arch_options", {{"output_activation", std::string(to_string(arch.output_activation))},
                                  {"leaky_slope", arch.leaky_slope},
                                  {"n_beams", arch.n_beams},
                                  {"roi_dim", arch.roi_dim},
                                  {"n_cells", arch.n_cells}}},
                {"train", to_json(train)},
                {"geometry_fingerprint", geometry_fingerprint},
                {"standardize", model.standardize},
                {"output_offset", model.output_offset.size() != 0},
                {"n_parameters", model.n_parameters()}};
  for (std::size_t l = 0; l < model.spec.layers.size(); ++l) {
    if (!model.spec.layers[l].has_params()) continue;
    const auto& name = model.spec.layers[l].name;
    c.add(name + ".W", model.layers[l].W);
    c.add(name + ".b", model.layers[l].b);
  }
  if (model.standardize) {
    c.add("input_mean", model.input_mean);
    c.add("input_std", model.input_std);
  }
  if (model.output_offset.size() != 0) c.add("output_offset", model.output_offset);
  return c;
}

Checkpoint checkpoint_from_container(const Container& c) {
  if (c.kind != ContainerKind::Checkpoint) throw FormatError("container is not a checkpoint");
  Checkpoint ck;
  Arch arch;
  try {
    const json& m = c.metadata;
    arch = parse_arch(m.at("arch").get<std::string>());
    const json& o = m.at("arch_options");
    ck.arch.output_activation = parse_activation(o.at("output_activation").get<std::string>());
    ck.arch.leaky_slope = o.at("leaky_slope").get<double>();
    ck.arch.n_beams = o.at("n_beams").get<int>();
    ck.arch.roi_dim = o.at("roi_dim").get<int>();
    ck.arch.n_cells = o.at("n_cells").get<int>();
    ck.train = train_config_from_json(m.at("train"));
    ck.geometry_fingerprint = m.at("geometry_fingerprint").get<std::uint64_t>();
    ck.model.standardize = m.at("standardize").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  ck.model.spec = make_spec(arch, ck.arch);
  ck.model.layers.resize(ck.model.spec.layers.size());
  for (std::size_t l = 0; l < ck.model.spec.layers.size(); ++l) {
    const LayerSpec& ly = ck.model.spec.layers[l];
    if (!ly.has_params()) continue;
    Eigen::MatrixXd w = c.matrix(ly.name + ".W");
    Eigen::MatrixXd b = c.matrix(ly.name + ".b");  // stored as n x 1
    const bool conv = ly.kind == LayerKind::Conv;
    const Eigen::Index rows = conv ? ly.kh * ly.kw * ly.in.c : ly.units;
    const Eigen::Index cols = conv ? ly.filters : ly.in.size();
    const Eigen::Index nb = conv ? ly.filters : ly.units;
    if (w.rows() != rows || w.cols() != cols || b.cols() != 1 || b.rows() != nb) {
      throw FormatError("checkpoint tensor shapes for layer " + ly.name + " do not match " +
                        std::string(to_string(arch)));
    }
    ck.model.layers[l].W = std::move(w);
    ck.model.layers[l].b = b.col(0);
  }
  if (ck.model.standardize) {
    ck.model.input_mean = c.vector("input_mean");
    ck.model.input_std = c.vector("input_std");
  }
  if (c.find("output_offset")) {
    ck.model.output_offset = c.vector("output_offset");
    if (ck.model.output_offset.size() != ck.model.spec.output().size()) {
      throw FormatError("checkpoint output offset does not match the output size");
    }
  }
  return ck;
}

// ---- matrix ----------------------------------------------------------------

Container matrix_to_container(const SensitivityMatrix& s, const PseudoInverse* pinv) {
  Container c;
  c.kind = ContainerKind::Matrix;
  c.metadata = {{"units", "cm"},
                {"n_beams", s.n_beams()},
                {"n_cells", s.n_cells()},
                {"n_roi", s.n_roi},
                {"geometry_fingerprint", s.geometry_fingerprint},
                {"has_pinv", pinv != nullptr}};
  c.add("L", s.L);
  c.add("clipped_length_cm", s.clipped_length_cm);
  if (pinv) {
    c.metadata["pinv_rank"] = pinv->rank;
    c.metadata["pinv_rcond"] = pinv->rcond;
    c.add("pinv", pinv->matrix);
    c.add("singular_values", pinv->singular_values);
  }
  return c;
}

SensitivityMatrix matrix_from_container(const Container& c) {
  if (c.kind != ContainerKind::Matrix) throw FormatError("container is not a matrix");
  SensitivityMatrix s;
  s.L = c.matrix("L");
  s.clipped_length_cm = c.vector("clipped_length_cm");
  try {
    s.n_roi = c.metadata.at("n_roi").get<int>();
    s.geometry_fingerprint = c.metadata.at("geometry_fingerprint").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("matrix metadata: ") + e.what());
  }
  return s;
}

}  // namespace lastomo
