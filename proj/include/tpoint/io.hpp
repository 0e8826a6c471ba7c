#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <tpoint/audit.hpp>

namespace tpoint {

using nlohmann::json;

inline json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Eigen::VectorXd vec_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a numeric array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

inline json manifold_to_json(const Manifold& M) {
  json j;
  if (const auto* s = dynamic_cast<const Sphere*>(&M)) {
    j["kind"] = "sphere";
    j["dim"] = s->dim();
    j["radius"] = s->radius();
  } else if (const auto* t = dynamic_cast<const FlatTorus*>(&M)) {
    j["kind"] = "torus";
    j["periods"] = vec_to_json(t->periods());
  } else if (const auto* e = dynamic_cast<const Ellipsoid*>(&M)) {
    j["kind"] = "ellipsoid";
    j["semi_axes"] = vec_to_json(e->semi_axes());
  } else {
    throw std::invalid_argument("unserializable manifold kind " + M.kind());
  }
  return j;
}

inline std::shared_ptr<const Manifold> manifold_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "sphere")
    return std::make_shared<Sphere>(j.value("dim", 2), j.value("radius", 1.0));
  if (kind == "torus") return std::make_shared<FlatTorus>(vec_from_json(j.at("periods")));
  if (kind == "ellipsoid") return std::make_shared<Ellipsoid>(vec_from_json(j.at("semi_axes")));
  throw std::invalid_argument("unknown manifold kind " + kind);
}

inline std::shared_ptr<const FlatTorus> require_torus(
    const std::shared_ptr<const Manifold>& M, const std::string& what) {
  auto torus = std::dynamic_pointer_cast<const FlatTorus>(M);
  if (!torus) throw std::invalid_argument(what + " needs a torus manifold");
  return torus;
}

inline std::shared_ptr<const SmoothMap> map_from_json(const json& j,
                                                      const std::shared_ptr<const Manifold>& M) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return std::make_shared<IdentityMap>(M);
  if (kind == "rotation") {
    const Eigen::VectorXd a = vec_from_json(j.at("axis"));
    if (a.size() != 3) throw std::invalid_argument("rotation axis must have 3 components");
    return std::make_shared<RotationMap>(M, Eigen::Vector3d(a), j.at("angle").get<double>());
  }
  if (kind == "flow")
    return std::make_shared<FlowMap>(M, j.value("field", std::string("height-gradient")),
                                     j.at("epsilon").get<double>());
  if (kind == "torus-translation")
    return TorusAffineMap::translation(require_torus(M, kind), vec_from_json(j.at("shift")));
  if (kind == "torus-affine") {
    auto torus = require_torus(M, kind);
    const json& rows = j.at("linear");
    Eigen::MatrixXd A(rows.size(), rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Eigen::VectorXd row = vec_from_json(rows[r]);
      if (row.size() != A.cols()) throw std::invalid_argument("linear part must be square");
      A.row(static_cast<int>(r)) = row;
    }
    return std::make_shared<TorusAffineMap>(torus, A, vec_from_json(j.at("shift")));
  }
  if (kind == "torus-wave")
    return std::make_shared<TorusWaveMap>(require_torus(M, kind),
                                          j.at("amplitude").get<double>(),
                                          vec_from_json(j.at("shift")));
  if (kind == "composition")
    return std::make_shared<CompositionMap>(map_from_json(j.at("outer"), M),
                                            map_from_json(j.at("inner"), M));
  throw std::invalid_argument("unknown map kind " + kind);
}

inline json map_to_json(const SmoothMap& f) {
  json j;
  if (dynamic_cast<const IdentityMap*>(&f)) {
    j["kind"] = "identity";
  } else if (const auto* r = dynamic_cast<const RotationMap*>(&f)) {
    j["kind"] = "rotation";
    j["axis"] = vec_to_json(r->axis());
    j["angle"] = r->angle();
  } else if (const auto* fl = dynamic_cast<const FlowMap*>(&f)) {
    j["kind"] = "flow";
    j["field"] = fl->field();
    j["epsilon"] = fl->epsilon();
  } else if (const auto* a = dynamic_cast<const TorusAffineMap*>(&f)) {
    j["kind"] = "torus-affine";
    json rows = json::array();
    for (int r = 0; r < a->linear().rows(); ++r)
      rows.push_back(vec_to_json(a->linear().row(r)));
    j["linear"] = rows;
    j["shift"] = vec_to_json(a->shift());
  } else if (const auto* w = dynamic_cast<const TorusWaveMap*>(&f)) {
    j["kind"] = "torus-wave";
    j["amplitude"] = w->amplitude();
    j["shift"] = vec_to_json(w->shift());
  } else if (const auto* c = dynamic_cast<const CompositionMap*>(&f)) {
    j["kind"] = "composition";
    j["outer"] = map_to_json(*c->outer_ptr());
    j["inner"] = map_to_json(*c->inner_ptr());
  } else {
    throw std::invalid_argument("unserializable map kind " + f.kind());
  }
  return j;
}

inline std::shared_ptr<const Homotopy> homotopy_from_json(
    const json& j, const std::shared_ptr<const Manifold>& M) {
  const std::string kind = j.at("kind").get<std::string>();
  const int samples = j.value("track_samples", 64);
  if (kind == "constant") return std::make_shared<ConstantHomotopy>(M, samples);
  if (kind == "rotation") {
    const Eigen::VectorXd a = vec_from_json(j.at("axis"));
    if (a.size() != 3) throw std::invalid_argument("rotation axis must have 3 components");
    return std::make_shared<RotationHomotopy>(M, Eigen::Vector3d(a), j.at("angle").get<double>(),
                                              samples);
  }
  if (kind == "flow")
    return std::make_shared<FlowHomotopy>(M, j.value("field", std::string("height-gradient")),
                                          j.at("epsilon").get<double>(), samples);
  if (kind == "torus-translation")
    return std::make_shared<TorusTranslationHomotopy>(require_torus(M, kind),
                                                      vec_from_json(j.at("shift")), samples);
  if (kind == "torus-wave")
    return std::make_shared<TorusWaveHomotopy>(require_torus(M, kind),
                                               j.at("amplitude").get<double>(),
                                               vec_from_json(j.at("shift")), samples);
  throw std::invalid_argument("unknown homotopy kind " + kind);
}

inline SolverOptions solver_from_json(const json& j) {
  SolverOptions o;
  o.tol = j.value("tol", o.tol);
  o.max_iters = j.value("max_iters", o.max_iters);
  o.max_halvings = j.value("max_halvings", o.max_halvings);
  o.tikhonov = j.value("tikhonov", o.tikhonov);
  o.fd_step = j.value("fd_step", o.fd_step);
  o.steps_multiplier = j.value("steps_multiplier", o.steps_multiplier);
  o.t_min = j.value("t_min", o.t_min);
  o.prefilter_frac = j.value("prefilter_frac", o.prefilter_frac);
  o.sm_density = j.value("sm_density", o.sm_density);
  o.shift_density = j.value("shift_density", o.shift_density);
  o.seed = j.value("seed", o.seed);
  o.threads = j.value("threads", o.threads);
  o.dup_tol = j.value("dup_tol", o.dup_tol);
  o.link_radius = j.value("link_radius", o.link_radius);
  o.t_link_tol = j.value("t_link_tol", o.t_link_tol);
  o.family_diameter = j.value("family_diameter", o.family_diameter);
  o.family_min_members = j.value("family_min_members", o.family_min_members);
  return o;
}

inline AuditConfig audit_config_from_json(const json& j) {
  AuditConfig cfg;
  cfg.manifold = manifold_from_json(j.at("manifold"));
  if (j.contains("map")) cfg.map = map_from_json(j.at("map"), cfg.manifold);
  if (j.contains("homotopy")) cfg.homotopy = homotopy_from_json(j.at("homotopy"), cfg.manifold);
  const json& w = j.at("window");
  if (!w.is_array() || w.size() != 2)
    throw std::invalid_argument("window must be an array [a, b]");
  cfg.window_a = w[0].get<double>();
  cfg.window_b = w[1].get<double>();
  if (j.contains("zoll_length") && !j.at("zoll_length").is_null())
    cfg.zoll_length = j.at("zoll_length").get<double>();
  cfg.betti_sum = j.value("betti_sum", cfg.betti_sum);
  cfg.cup_length = j.value("cup_length", cfg.cup_length);
  cfg.k_max = j.value("k_max", cfg.k_max);
  cfg.delta_grid = j.value("delta_grid", cfg.delta_grid);
  cfg.class_tolerance = j.value("class_tolerance", cfg.class_tolerance);
  if (j.contains("torus_classes"))
    for (const auto& q : j.at("torus_classes")) cfg.torus_classes.push_back(vec_from_json(q));
  if (j.contains("run_unbounded")) cfg.run_unbounded = j.at("run_unbounded").get<bool>();
  if (j.contains("unbounded_width")) cfg.unbounded_width = j.at("unbounded_width").get<double>();
  if (j.contains("solver")) cfg.solver = solver_from_json(j.at("solver"));
  cfg.hessian_segments = j.value("hessian_segments", cfg.hessian_segments);
  validate(cfg);
  return cfg;
}

inline json record_to_json(const TranslatedPointRecord& r) {
  json j;
  j["t"] = r.state.t;
  j["x"] = vec_to_json(r.state.x);
  j["v"] = vec_to_json(r.state.v);
  j["residual_norm"] = r.residual_norm;
  j["iterations"] = r.iterations;
  j["morse_index"] = r.morse_index;
  j["kernel_dim"] = r.kernel_dim;
  j["nondegenerate"] = r.nondegenerate;
  j["borderline"] = r.borderline;
  j["family_id"] = r.family_id;
  j["is_family"] = r.is_family;
  j["cluster_size"] = r.cluster_size;
  j["cluster_diameter"] = r.cluster_diameter;
  j["family_dim"] = r.family_dim;
  return j;
}

inline TranslatedPointRecord record_from_json(const json& j) {
  TranslatedPointRecord r;
  r.state.t = j.at("t").get<double>();
  r.state.x = vec_from_json(j.at("x"));
  r.state.v = vec_from_json(j.at("v"));
  r.residual_norm = j.value("residual_norm", 0.0);
  r.iterations = j.value("iterations", 0);
  r.morse_index = j.value("morse_index", -1);
  r.kernel_dim = j.value("kernel_dim", 0);
  r.nondegenerate = j.value("nondegenerate", true);
  r.borderline = j.value("borderline", false);
  r.family_id = j.value("family_id", -1);
  r.is_family = j.value("is_family", false);
  r.cluster_size = j.value("cluster_size", 1);
  r.cluster_diameter = j.value("cluster_diameter", 0.0);
  r.family_dim = j.value("family_dim", 0);
  return r;
}

/// Serialized records drop their geodesic samples; rebuild them before any
/// classification that integrates along the arc.
inline void rehydrate_records(const Manifold& M, std::vector<TranslatedPointRecord>& records,
                              int steps_multiplier = 1) {
  for (auto& r : records) {
    if (!r.geodesic.points.empty()) continue;
    const int steps =
        steps_multiplier <= 1 ? 0 : steps_multiplier * M.steps_for(r.state.t);
    r.geodesic = M.geodesic({r.state.x, r.state.t * r.state.v}, 1.0, steps);
  }
}

struct RecordsFile {
  json config;
  std::vector<TranslatedPointRecord> records;
};

inline std::string records_to_string(const json& config,
                                     const std::vector<TranslatedPointRecord>& records) {
  json j;
  j["config"] = config;
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  j["records"] = arr;
  return j.dump(2) + "\n";
}

inline RecordsFile records_from_string(const std::string& text) {
  const json j = json::parse(text);
  RecordsFile out;
  out.config = j.value("config", json::object());
  for (const auto& rj : j.at("records")) out.records.push_back(record_from_json(rj));
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline json tower_to_json(const TowerAudit& a) {
  json j;
  j["verdict"] = verdict_label(a.verdict);
  json exts = json::array();
  for (const auto& e : a.extensions) {
    json ej;
    ej["source"] = e.source;
    ej["t_from"] = e.t_from;
    ej["t_to"] = e.t_to;
    ej["drift"] = e.drift;
    ej["moved"] = e.moved;
    ej["ok"] = e.ok;
    exts.push_back(ej);
  }
  j["extensions"] = exts;
  j["matched"] = a.matched;
  j["unmatched_base"] = a.unmatched_base;
  j["unmatched_upper"] = a.unmatched_upper;
  j["worst_drift"] = a.worst_drift;
  if (!a.note.empty()) j["note"] = a.note;
  return j;
}

inline json count_to_json(const CountAudit& a) {
  json j;
  j["verdict"] = verdict_label(a.verdict);
  j["clusters"] = a.clusters;
  j["betti_sum"] = a.betti_sum;
  j["slack"] = a.slack;
  j["degenerate"] = a.degenerate;
  j["borderline"] = a.borderline;
  if (!a.note.empty()) j["note"] = a.note;
  return j;
}

inline json localization_to_json(const LocalizationAudit& a) {
  json j;
  j["verdict"] = verdict_label(a.verdict);
  j["allowance"] = a.allowance;
  j["nearest"] = a.nearest;
  return j;
}

inline json unbounded_to_json(const UnboundedAudit& a) {
  json j;
  j["verdict"] = verdict_label(a.verdict);
  j["width"] = a.width;
  j["window_counts"] = a.window_counts;
  j["class_lengths"] = a.class_lengths;
  j["class_shifts"] = a.class_shifts;
  j["matched_shifts"] = a.matched_shifts;
  j["shifts_increasing"] = a.shifts_increasing;
  if (!a.note.empty()) j["note"] = a.note;
  return j;
}

inline json presence_to_json(const PresenceAudit& a) {
  json j;
  j["verdict"] = verdict_label(a.verdict);
  j["distinct_mod_ell"] = a.distinct_mod_ell;
  j["threshold"] = a.threshold;
  j["family_present"] = a.family_present;
  return j;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_vec(const Eigen::VectorXd& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ";";
    out += fmt(v[i]);
  }
  return out;
}

}  // namespace detail

inline json report_to_json(const SpectrumReport& rep) {
  json j;
  j["manifold"] = rep.manifold_kind;
  j["map"] = rep.map_kind;
  j["window"] = json::array({rep.window_a, rep.window_b});
  j["zoll_length"] = rep.zoll_length ? json(*rep.zoll_length) : json(nullptr);
  if (rep.delta_value) {
    json d;
    d["value"] = *rep.delta_value;
    d["converged"] = rep.delta_converged;
    if (rep.delta_below_half_ell) d["below_half_zoll"] = *rep.delta_below_half_ell;
    j["delta"] = d;
  } else {
    j["delta"] = nullptr;
  }
  json audits;
  if (rep.tower) audits["tower"] = detail::tower_to_json(*rep.tower);
  if (rep.count) audits["count"] = detail::count_to_json(*rep.count);
  if (rep.localization) audits["localization"] = detail::localization_to_json(*rep.localization);
  if (rep.unbounded) audits["unbounded"] = detail::unbounded_to_json(*rep.unbounded);
  if (rep.presence) audits["presence"] = detail::presence_to_json(*rep.presence);
  j["audits"] = audits.is_null() ? json::object() : audits;
  json arr = json::array();
  for (const auto& r : rep.records) arr.push_back(record_to_json(r));
  j["records"] = arr;
  j["all_ok"] = rep.all_ok();
  return j;
}

inline std::string report_json(const SpectrumReport& rep) {
  return report_to_json(rep).dump(2) + "\n";
}

inline std::string report_csv(const SpectrumReport& rep) {
  std::string out = "t,x,v,index,kernel_dim,family_id,flags\n";
  for (const auto& r : rep.records) {
    std::string flags;
    const auto add = [&](const char* f) {
      if (!flags.empty()) flags += "|";
      flags += f;
    };
    if (r.is_family) add("family");
    if (!r.nondegenerate) add("degenerate");
    if (r.borderline) add("borderline");
    out += detail::fmt(r.state.t) + "," + detail::fmt_vec(r.state.x) + "," +
           detail::fmt_vec(r.state.v) + "," + std::to_string(r.morse_index) + "," +
           std::to_string(r.kernel_dim) + "," + std::to_string(r.family_id) + "," + flags + "\n";
  }
  return out;
}

inline std::string report_svg(const SpectrumReport& rep) {
  const double W = 720, H = 260, L = 50, R = 20, T = 20, B = 40;
  const double plot_w = W - L - R, plot_h = H - T - B;
  const double a = rep.window_a, b = rep.window_b;
  const auto sx = [&](double t) { return L + (t - a) / (b - a) * plot_w; };
  char buf[256];
  std::string s;
  const auto line = [&](const char* fmt_str, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt_str, args...);
    s += buf;
  };
  line("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
       "viewBox=\"0 0 %.0f %.0f\">\n",
       W, H, W, H);
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  line("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n", L,
       T + plot_h, L + plot_w, T + plot_h);
  if (rep.zoll_length)
    for (int k = 1; k * *rep.zoll_length <= b; ++k) {
      const double t = k * *rep.zoll_length;
      if (t < a) continue;
      line("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#bbbbbb\" "
           "stroke-dasharray=\"4 3\"/>\n",
           sx(t), T, sx(t), T + plot_h);
    }
  for (const auto& r : rep.records) {
    const double h = r.is_family ? 0.8 * plot_h : 0.55 * plot_h;
    const char* color = r.is_family ? "#4c78a8" : (r.nondegenerate ? "#f58518" : "#e45756");
    line("<rect x=\"%.2f\" y=\"%.2f\" width=\"3\" height=\"%.2f\" fill=\"%s\"/>\n",
         sx(r.state.t) - 1.5, T + plot_h - h, h, color);
  }
  line("<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\">%.4g</text>\n", L,
       T + plot_h + 16.0, a);
  line("<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\">%.4g</text>\n",
       L + plot_w, T + plot_h + 16.0, b);
  line("<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\">time shift</text>\n",
       L + 0.5 * plot_w, T + plot_h + 32.0);
  s += "</svg>\n";
  return s;
}

}  // namespace tpoint
