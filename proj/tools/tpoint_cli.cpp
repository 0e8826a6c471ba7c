#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <tpoint/io.hpp>

namespace {

using tpoint::json;

struct GlobalArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_global_flags(CLI::App& cmd, GlobalArgs& g) {
  cmd.add_option("--config", g.config, "JSON configuration file")->required();
  cmd.add_option("--out", g.out, "output file (default: stdout)");
  cmd.add_option("--seed", g.seed, "stratified sampling jitter seed");
  cmd.add_option("--threads", g.threads, "worker thread count");
}

json load_config(const GlobalArgs& g) {
  return json::parse(tpoint::read_text_file(g.config));
}

tpoint::AuditConfig resolve(const json& raw, const GlobalArgs& g) {
  tpoint::AuditConfig cfg = tpoint::audit_config_from_json(raw);
  if (g.seed) cfg.solver.seed = *g.seed;
  if (g.threads) cfg.solver.threads = *g.threads;
  return cfg;
}

std::shared_ptr<const tpoint::SmoothMap> endpoint_map(const tpoint::AuditConfig& cfg) {
  return cfg.map ? cfg.map : cfg.homotopy->at(1.0);
}

void emit(const GlobalArgs& g, const std::string& text) {
  if (g.out.empty())
    std::fputs(text.c_str(), stdout);
  else
    tpoint::write_text_file(g.out, text);
}

int run_solve(const GlobalArgs& g) {
  const json raw = load_config(g);
  const tpoint::AuditConfig cfg = resolve(raw, g);
  const auto f = endpoint_map(cfg);
  const auto records = tpoint::window_scan(*f, cfg.window_a, cfg.window_b, cfg.solver);
  emit(g, tpoint::records_to_string(raw, records));
  return 0;
}

int run_classify(const GlobalArgs& g, const std::string& records_path) {
  const json raw = load_config(g);
  const tpoint::AuditConfig cfg = resolve(raw, g);
  const auto f = endpoint_map(cfg);
  tpoint::RecordsFile input = tpoint::records_from_string(tpoint::read_text_file(records_path));
  tpoint::rehydrate_records(f->manifold(), input.records, cfg.solver.steps_multiplier);
  tpoint::ClassifyOptions copt;
  copt.segments = cfg.hessian_segments;
  copt.threads = cfg.solver.threads;
  const auto classified = tpoint::classify_records(f, input.records, copt);
  emit(g, tpoint::records_to_string(input.config.is_null() ? raw : input.config, classified));
  return 0;
}

json branch_to_json(const tpoint::BranchTrace& b) {
  json j;
  j["source"] = b.source;
  j["s"] = b.s_grid;
  j["t"] = b.t_trace;
  j["lost"] = b.lost;
  if (b.lost) j["lost_at"] = b.lost_at;
  j["swapped"] = b.swapped;
  if (b.final_record) j["final"] = tpoint::record_to_json(*b.final_record);
  return j;
}

int run_continue(const GlobalArgs& g, const std::string& from_path, int steps) {
  const json raw = load_config(g);
  const tpoint::AuditConfig cfg = resolve(raw, g);
  if (!cfg.homotopy) throw std::invalid_argument("continue needs a homotopy in the config");
  tpoint::RecordsFile start = tpoint::records_from_string(tpoint::read_text_file(from_path));
  const auto result = tpoint::continue_solutions(*cfg.homotopy, start.records, steps, cfg.solver);
  json j;
  j["config"] = raw;
  json branches = json::array();
  for (const auto& b : result.branches) branches.push_back(branch_to_json(b));
  j["branches"] = branches;
  json recs = json::array();
  for (const auto& r : result.records) recs.push_back(tpoint::record_to_json(r));
  j["records"] = recs;
  emit(g, j.dump(2) + "\n");
  return 0;
}

int run_audit_zoll(const GlobalArgs& g) {
  const json raw = load_config(g);
  const tpoint::AuditConfig cfg = resolve(raw, g);
  const auto f = endpoint_map(cfg);
  const auto records = tpoint::window_scan(
      *f, cfg.window_a, cfg.window_b,
      tpoint::detail::long_arc_options(f->manifold(), cfg.solver, cfg.window_b));
  const tpoint::TowerAudit tower = tpoint::audit_zoll_tower(
      *f, records, cfg.window_a, cfg.window_b, cfg.zoll_length, cfg.solver);
  json j;
  j["tower"] = tpoint::detail::tower_to_json(tower);
  j["records"] = json::array();
  for (const auto& r : records) j["records"].push_back(tpoint::record_to_json(r));
  emit(g, j.dump(2) + "\n");
  return tpoint::verdict_ok(tower.verdict) ? 0 : 1;
}

int run_spectrum(const GlobalArgs& g, const std::string& csv_path, const std::string& svg_path) {
  const json raw = load_config(g);
  const tpoint::AuditConfig cfg = resolve(raw, g);
  const tpoint::SpectrumReport rep = tpoint::run_audit(cfg);
  emit(g, tpoint::report_json(rep));
  if (!csv_path.empty()) tpoint::write_text_file(csv_path, tpoint::report_csv(rep));
  if (!svg_path.empty()) tpoint::write_text_file(svg_path, tpoint::report_svg(rep));
  return rep.all_ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"translated-point solver and spectrum auditor"};
  app.require_subcommand(1);

  GlobalArgs solve_args, classify_args, continue_args, zoll_args, spectrum_args;
  std::string records_path, from_path, csv_path, svg_path;
  int steps = 20;

  CLI::App* solve = app.add_subcommand("solve", "scan a shift window for translated points");
  add_global_flags(*solve, solve_args);

  CLI::App* classify =
      app.add_subcommand("classify", "attach kernel and index data to solved records");
  add_global_flags(*classify, classify_args);
  classify->add_option("--records", records_path, "records file to classify")->required();

  CLI::App* cont = app.add_subcommand("continue", "follow records along a homotopy");
  add_global_flags(*cont, continue_args);
  cont->add_option("--from", from_path, "records file with start solutions")->required();
  cont->add_option("--steps", steps, "base continuation steps");

  CLI::App* zoll = app.add_subcommand("audit-zoll", "check the shift tower structure");
  add_global_flags(*zoll, zoll_args);

  CLI::App* spectrum = app.add_subcommand("spectrum", "run the full audit suite");
  add_global_flags(*spectrum, spectrum_args);
  spectrum->add_option("--csv", csv_path, "also write the record table as CSV");
  spectrum->add_option("--svg", svg_path, "also write the shift spectrum as SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (solve->parsed()) return run_solve(solve_args);
    if (classify->parsed()) return run_classify(classify_args, records_path);
    if (cont->parsed()) return run_continue(continue_args, from_path, steps);
    if (zoll->parsed()) return run_audit_zoll(zoll_args);
    if (spectrum->parsed()) return run_spectrum(spectrum_args, csv_path, svg_path);
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
