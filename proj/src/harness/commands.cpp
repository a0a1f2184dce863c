#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "demi/cov_search.hpp"
#include "demi/errors.hpp"
#include "demi/harness.hpp"
#include "demi/oracles.hpp"

namespace demi::harness {

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Maps library exceptions onto exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const TargetUnreachable& e) {
    err << "error: " << e.what() << " (best residual " << e.best_residual() << ")\n";
    return kNumericalAbort;
  } catch (const NumericalError& e) {
    err << "numerical abort";
    if (e.step() >= 0) err << " at step " << e.step();
    err << ": " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InvariantError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
}

void append_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::app | std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
}

double world_target(const GaussianWorld& w) {
  return w.metadata().target_mi.value_or(w.mi_joint());
}

}  // namespace

int cmd_make_world(const MakeWorldOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!(opts.mi > 0.0)) throw ConfigError("--mi must be > 0");
    if (opts.dims < 1) throw ConfigError("--dims must be >= 1");
    const GaussianWorld w = synthesize_world(opts.mi, opts.dims, opts.seed);
    const std::string path = resolve_output(opts.out);
    w.save(path);
    out << "wrote " << path << "\n"
        << "mi_joint " << fixed(w.mi_joint()) << "\nmi_marginal " << fixed(w.mi_marg())
        << "\nmi_conditional " << fixed(w.mi_cond()) << '\n';
    return int{kOk};
  });
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig run = opts.run;
    const GaussianWorld world = GaussianWorld::load(run.world);
    run.target_mi = world_target(world);
    run.dims = world.dims();
    run.out = resolve_output(run.out.empty() ? "train.csv" : run.out);
    run.validate();

    const TrainResult result = train_estimator(world, run.train_config());
    append_csv(run.out, curve_rows(run, result, opts.wall_time));
    append_text(run.out + ".runs.jsonl", run.to_json() + '\n');
    if (result.critics) {
      const std::string ckpt = opts.checkpoint.empty() ? run.out + ".ckpt.json" : opts.checkpoint;
      nn::save_checkpoint(ckpt, to_checkpoint(*result.critics));
      out << "checkpoint " << ckpt << '\n';
    }
    const auto& f = result.final_estimate;
    out << to_string(run.estimator) << " K=" << run.k << " seed=" << run.seed << ": "
        << fixed(f.mean) << " +- " << fixed(f.std_error) << " nats (cap " << fixed(f.cap)
        << ", true " << fixed(world.mi_joint()) << ")\n";
    return int{kOk};
  });
}

std::vector<RunConfig> expand_grid(const SweepOptions& opts) {
  if (opts.worlds.empty() || opts.estimators.empty() || opts.ks.empty() || opts.seeds.empty())
    throw ConfigError("sweep grid is empty");
  std::vector<RunConfig> cells;
  for (const auto& path : opts.worlds) {
    const GaussianWorld w = GaussianWorld::load(path);
    for (const auto& est : opts.estimators)
      for (auto k : opts.ks)
        for (auto seed : opts.seeds) {
          RunConfig c = opts.base;
          c.world = path;
          c.target_mi = world_target(w);
          c.dims = w.dims();
          c.estimator = parse_estimator_kind(est);
          c.k = k;
          c.seed = seed;
          c.out = opts.out;
          cells.push_back(std::move(c));
        }
  }
  return cells;
}

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.jobs < 1) throw ConfigError("--jobs must be >= 1");
    SweepOptions resolved = opts;
    resolved.out = resolve_output(opts.out);
    const auto cells = expand_grid(resolved);
    const SweepResult result = run_sweep(cells, opts.jobs);

    std::vector<CsvRow> rows;
    for (const auto& c : result.cells) {
      if (!c.row) continue;
      rows.push_back(*c.row);
      if (opts.wall_time) rows.back().wall_ms = c.wall_ms;
    }
    std::stable_sort(rows.begin(), rows.end(), sweep_order);
    nlohmann::ordered_json meta;
    meta["format_version"] = kFormatVersion;
    meta["cells"] = nlohmann::json::array();
    int code = kOk;
    for (const auto& c : result.cells) {
      nlohmann::ordered_json j;
      j["config"] = nlohmann::json::parse(c.config.to_json());
      j["wall_ms"] = c.wall_ms;
      j["ok"] = c.row.has_value();
      if (!c.row) {
        j["error"] = c.error;
        err << "cell failed: " << to_string(c.config.estimator) << " mi=" << c.config.target_mi
            << " K=" << c.config.k << " seed=" << c.config.seed << ": " << c.error << '\n';
        code = std::max(code, c.exit_code);
      }
      meta["cells"].push_back(std::move(j));
    }
    write_csv(resolved.out, rows);
    write_text(resolved.out + ".meta.json", meta.dump(2) + '\n');
    out << "wrote " << rows.size() << " rows to " << resolved.out << " (" << result.failures()
        << " failed cells)\n";
    return code;
  });
}

int cmd_oracle(const OracleOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto reports = oracles::run_suite(opts.suite, opts.seed);
    std::string lines;
    bool ok = true;
    for (const auto& r : reports) {
      lines += r.to_json_line() + '\n';
      ok = ok && r.pass;
      if (!r.pass) err << "FAIL " << r.quantity << '\n';
    }
    if (opts.out.empty())
      out << lines;
    else
      write_text(resolve_output(opts.out), lines);
    return ok ? int{kOk} : int{kCheckFailed};
  });
}

int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto rows = read_csv(opts.csv);
    const std::string text = render_report(rows);
    if (opts.out.empty())
      out << text;
    else
      write_text(resolve_output(opts.out), text);
    const auto violations = check_caps(rows);
    for (const auto& v : violations) err << "cap violation, line " << v.line << ": " << v.reason << '\n';
    return violations.empty() ? int{kOk} : int{kCheckFailed};
  });
}

}  // namespace demi::harness
