#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "demi/errors.hpp"
#include "demi/harness.hpp"

namespace demi::harness {

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const CellOutcome& c) { return !c.row; }));
}

std::vector<CsvRow> SweepResult::rows() const {
  std::vector<CsvRow> out;
  for (const auto& c : cells)
    if (c.row) out.push_back(*c.row);
  std::stable_sort(out.begin(), out.end(), sweep_order);
  return out;
}

namespace {

CellOutcome run_cell(const RunConfig& config, const GaussianWorld& world) {
  CellOutcome cell;
  cell.config = config;
  const auto start = std::chrono::steady_clock::now();
  try {
    const TrainResult result = train_estimator(world, config.train_config());
    CsvRow row = curve_rows(config, result, false).back();
    row.bound_nats = result.final_estimate.mean;
    row.stderr_nats = result.final_estimate.std_error;
    row.cap_nats = result.final_estimate.cap;
    cell.row = row;
    cell.curve = result.curve;
  } catch (const NumericalError& e) {
    cell.error = e.what();
    cell.exit_code = kNumericalAbort;
  } catch (const std::invalid_argument& e) {
    cell.error = e.what();
    cell.exit_code = kConfigError;
  } catch (const std::exception& e) {
    cell.error = e.what();
    cell.exit_code = kNumericalAbort;
  }
  cell.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return cell;
}

}  // namespace

SweepResult run_sweep(const std::vector<RunConfig>& cells, std::size_t jobs) {
  std::set<std::string> seen;
  std::map<std::string, GaussianWorld> worlds;
  for (const auto& c : cells) {
    c.validate();
    RunConfig key = c;
    key.out.clear();
    if (!seen.insert(key.to_json()).second)
      throw ConfigError("sweep: duplicate cell " + to_string(c.estimator) + " K=" +
                        std::to_string(c.k) + " seed=" + std::to_string(c.seed));
    if (!worlds.contains(c.world)) worlds.emplace(c.world, GaussianWorld::load(c.world));
  }

  SweepResult result;
  result.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      result.cells[i] = run_cell(cells[i], worlds.at(cells[i].world));
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(cells.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }

  // Cells are reported in the order of their rows; failed cells keep the
  // order of their configs.
  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) {
    const auto& c = cells[i];
    return std::make_tuple(to_string(c.estimator), c.target_mi, c.k, c.seed, to_string(c.critic));
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  SweepResult sorted;
  for (auto i : order) sorted.cells.push_back(std::move(result.cells[i]));
  return sorted;
}

}  // namespace demi::harness
