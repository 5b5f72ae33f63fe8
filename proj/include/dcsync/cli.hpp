#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dcsync/engine.hpp"
#include "dcsync/history.hpp"

namespace dcsync {

// Grid of runs: data x protocol x workers x algorithm, every cell repeated.
struct ExperimentSpec {
  std::vector<std::filesystem::path> data;
  std::vector<ProtocolConfig> protocols;
  std::vector<int> workers;
  std::vector<GdConfig> algorithms;  // base workload with algorithm filled in
  StragglerModel straggler;
  int repeats = 10;
  std::uint64_t timing_seed = 0;
  std::chrono::milliseconds watchdog{10'000};
  std::optional<std::filesystem::path> history_out;
  std::optional<std::filesystem::path> out;

  std::size_t cells() const {
    return data.size() * protocols.size() * workers.size() * algorithms.size();
  }
};

// "4", "2,4,8", "6..40" or "6..40:2".
std::vector<int> parse_int_list(const std::string& text);
// "batch", "sgd" or "minibatch=<b>", applied on top of `base`.
GdConfig parse_algorithm(const std::string& text, const GdConfig& base);

std::string csv_header();

struct OracleReport {
  int workers = 0;
  int iters = 0;
  std::uint64_t total = 0;
  std::uint64_t bsp_valid = 0;
  std::uint64_t rcwc_valid = 0;
  std::uint64_t sequential_valid = 0;
  std::uint64_t rcwc_not_bsp = 0;         // separates BSP from RC/WC
  std::uint64_t sequential_not_rcwc = 0;
  std::uint64_t invalid_everywhere = 0;
  // Counterexamples to the inclusions; all zero when they hold.
  std::uint64_t bsp_not_sequential = 0;
  std::uint64_t rcwc_not_sequential = 0;
  std::uint64_t bsp_not_rcwc = 0;
  std::uint64_t delay_monotonicity_violations = 0;
  std::optional<History> separating_example;  // RC/WC-valid, BSP-invalid
  std::optional<History> invalid_example;     // invalid under every checker

  bool inclusions_hold() const {
    return bsp_not_sequential == 0 && rcwc_not_sequential == 0 && bsp_not_rcwc == 0 &&
           delay_monotonicity_violations == 0;
  }
};

OracleReport run_oracle(int workers, int iters);

int cmd_gen_data(std::size_t examples, std::size_t features, double noise,
                 std::uint64_t seed, const std::filesystem::path& out);
int cmd_run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
// mode: "sequential", "rcwc" or "bsp". Exit 0 when valid, 1 when not.
int cmd_check(const std::filesystem::path& history, const std::string& mode,
              Iteration delta, std::ostream& out);
int cmd_oracle(int workers, int iters, std::ostream& out);

// Full command line (without the program name). Returns the exit status:
// 0 success / valid, 1 invalid verdict or failed inclusion, 2 usage or input
// errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dcsync
