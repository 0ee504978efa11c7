#include "lastomo/config.hpp"

#include "lastomo/errors.hpp"
#include "lastomo/image_io.hpp"

#include <set>

namespace lastomo {

using nlohmann::json;

namespace {

// Reads known keys from an object and complains about the rest.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!it.key().empty() && it.key()[0] == '_') continue;
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const TransitionLine& l) {
  return {{"name", l.name},       {"nu0_cm1", l.nu0_cm1}, {"s_ref", l.s_ref},
          {"e_lower_cm1", l.e_lower_cm1}, {"t_ref_k", l.t_ref_k}, {"q_poly", l.q_poly},
          {"t_min_k", l.t_min_k}, {"t_max_k", l.t_max_k}};
}

TransitionLine line_from_json(const json& j, const std::string& name) {
  TransitionLine l;
  l.name = name;
  Reader r(j, "lines." + name);
  r.get("name", l.name);
  for (const char* k : {"nu0_cm1", "s_ref", "e_lower_cm1", "q_poly"}) {
    if (!r.has(k)) throw ConfigError("lines." + name + ": missing required key '" + k + "'");
  }
  r.get("nu0_cm1", l.nu0_cm1);
  r.get("s_ref", l.s_ref);
  r.get("e_lower_cm1", l.e_lower_cm1);
  r.get("t_ref_k", l.t_ref_k);
  r.get("q_poly", l.q_poly);
  r.get("t_min_k", l.t_min_k);
  r.get("t_max_k", l.t_max_k);
  r.finish();
  validate(l);
  return l;
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"l2_penalty", c.l2_penalty},
          {"epochs", c.epochs},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"standardize_inputs", c.standardize_inputs},
          {"center_targets", c.center_targets},
          {"output_activation", std::string(to_string(c.output_activation))},
          {"leaky_slope", c.leaky_slope}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  Reader r(j, "train");
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("l2_penalty", c.l2_penalty);
  r.get("epochs", c.epochs);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("epsilon", c.epsilon);
  r.get("seed", c.seed);
  r.get("deterministic", c.deterministic);
  r.get("standardize_inputs", c.standardize_inputs);
  r.get("center_targets", c.center_targets);
  std::string act(to_string(c.output_activation));
  r.get("output_activation", act);
  c.output_activation = parse_activation(act);
  r.get("leaky_slope", c.leaky_slope);
  r.finish();
  validate(c);
  return c;
}

json to_json(const PhantomParams& p) {
  return {{"t_min", p.t_min},         {"t_peak_lo", p.t_peak_lo}, {"t_peak_hi", p.t_peak_hi},
          {"x_min", p.x_min},         {"x_peak_lo", p.x_peak_lo}, {"x_peak_hi", p.x_peak_hi},
          {"center_lo", p.center_lo}, {"center_hi", p.center_hi}, {"sigma_lo", p.sigma_lo},
          {"sigma_hi", p.sigma_hi},   {"scale_lo", p.scale_lo},   {"scale_hi", p.scale_hi}};
}

PhantomParams phantom_from_json(const json& j) {
  PhantomParams p;
  Reader r(j, "phantom");
  r.get("t_min", p.t_min);
  r.get("t_peak_lo", p.t_peak_lo);
  r.get("t_peak_hi", p.t_peak_hi);
  r.get("x_min", p.x_min);
  r.get("x_peak_lo", p.x_peak_lo);
  r.get("x_peak_hi", p.x_peak_hi);
  r.get("center_lo", p.center_lo);
  r.get("center_hi", p.center_hi);
  r.get("sigma_lo", p.sigma_lo);
  r.get("sigma_hi", p.sigma_hi);
  r.get("scale_lo", p.scale_lo);
  r.get("scale_hi", p.scale_hi);
  r.finish();
  validate(p);
  return p;
}

json to_json(const MeshConfig& m) {
  return {{"bounding_side_mm", m.bounding_side_mm},
          {"roi_side_mm", m.roi_side_mm},
          {"fine_cell_mm", m.fine_cell_mm},
          {"coarse_cell_mm", m.coarse_cell_mm},
          {"corner_cut_mm", m.corner_cut_mm},
          {"expected_background_cells", m.expected_background_cells}};
}

MeshConfig mesh_from_json(const json& j) {
  MeshConfig m;
  Reader r(j, "mesh");
  r.get("bounding_side_mm", m.bounding_side_mm);
  r.get("roi_side_mm", m.roi_side_mm);
  r.get("fine_cell_mm", m.fine_cell_mm);
  r.get("coarse_cell_mm", m.coarse_cell_mm);
  r.get("corner_cut_mm", m.corner_cut_mm);
  r.get("expected_background_cells", m.expected_background_cells);
  r.finish();
  return m;
}

json to_json(const BeamConfig& b) {
  return {{"angles_deg", b.angles_deg},
          {"beams_per_angle", b.beams_per_angle},
          {"spacing_mm", b.spacing_mm}};
}

BeamConfig beams_from_json(const json& j) {
  BeamConfig b;
  Reader r(j, "beams");
  r.get("angles_deg", b.angles_deg);
  r.get("beams_per_angle", b.beams_per_angle);
  r.get("spacing_mm", b.spacing_mm);
  r.finish();
  return b;
}

json to_json(const DatasetCounts& c) {
  return {{"n_single", c.n_single}, {"n_double", c.n_double}, {"n_train", c.n_train},
          {"n_test", c.n_test}};
}

DatasetCounts counts_from_json(const json& j) {
  DatasetCounts c;
  Reader r(j, "counts");
  r.get("n_single", c.n_single);
  r.get("n_double", c.n_double);
  r.get("n_train", c.n_train);
  r.get("n_test", c.n_test);
  r.finish();
  return c;
}

json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"mesh", to_json(c.mesh)},
          {"beams", to_json(c.beams)},
          {"lines", json::array({to_json(c.lines[0]), to_json(c.lines[1])})},
          {"pressure_atm", c.pressure_atm},
          {"phantom", to_json(c.phantom)},
          {"counts", to_json(c.counts)},
          {"train", to_json(c.train)},
          {"rcond", c.rcond},
          {"sweep_snr_db", c.sweep_snr_db},
          {"archs", c.archs}};
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  Reader r(j, "config");
  r.get("seed", c.seed);
  if (r.has("mesh")) c.mesh = mesh_from_json(r.at("mesh"));
  if (r.has("beams")) c.beams = beams_from_json(r.at("beams"));
  if (!r.has("lines")) throw ConfigError("config: missing 'lines' (two transition lines)");
  const json& lines = r.at("lines");
  if (!lines.is_array() || lines.size() != 2) {
    throw ConfigError("config.lines: expected an array of two transition lines");
  }
  c.lines[0] = line_from_json(lines[0], "nu1");
  c.lines[1] = line_from_json(lines[1], "nu2");
  r.get("pressure_atm", c.pressure_atm);
  if (r.has("phantom")) c.phantom = phantom_from_json(r.at("phantom"));
  if (r.has("counts")) c.counts = counts_from_json(r.at("counts"));
  if (r.has("train")) c.train = train_config_from_json(r.at("train"));
  r.get("rcond", c.rcond);
  r.get("sweep_snr_db", c.sweep_snr_db);
  r.get("archs", c.archs);
  r.finish();
  validate(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void validate(const PipelineConfig& c) {
  validate(c.lines[0]);
  validate(c.lines[1]);
  validate(c.phantom);
  validate(c.train);
  if (!(c.pressure_atm > 0.0)) throw ConfigError("pressure must be positive");
  if (!(c.rcond >= 0.0)) throw ConfigError("rcond must be non-negative");
  for (const auto& a : c.archs) parse_arch(a);
}

}  // namespace lastomo
