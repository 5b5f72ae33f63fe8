#include "dcsync/cli.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"

namespace dcsync {

namespace {

int parse_int(std::string_view s, const std::string& what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("bad " + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::string number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string protocol_column(const ProtocolConfig& p) {
  switch (p.kind) {
    case ProtocolKind::bsp:
      return "bsp";
    case ProtocolKind::data_centric:
      return "rcwc";
    case ProtocolKind::bounded_delay:
      return "delay";
    case ProtocolKind::fully_async:
      return "async";
  }
  return "?";
}

std::string delta_column(const ProtocolConfig& p) {
  const auto s = p.staleness();
  return s ? std::to_string(*s) : "inf";
}

std::size_t batch_column(const GdConfig& gd, std::size_t n) {
  switch (gd.algorithm) {
    case Algorithm::batch:
      return n;
    case Algorithm::sgd:
      return 1;
    case Algorithm::minibatch:
      return gd.batch_size;
  }
  return 0;
}

std::string row_prefix(const RunConfig& cfg) {
  const auto& d = *cfg.dataset;
  return protocol_column(cfg.protocol) + "," + delta_column(cfg.protocol) + "," +
         std::to_string(cfg.workers) + "," + std::to_string(d.num_features()) + "," +
         std::to_string(d.num_examples()) + "," + to_string(cfg.gd.algorithm) + "," +
         std::to_string(batch_column(cfg.gd, d.num_examples()));
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = rest.substr(0, comma);
    rest.remove_prefix(comma == std::string_view::npos ? rest.size() : comma + 1);
    const auto dots = item.find("..");
    if (dots == std::string_view::npos) {
      out.push_back(parse_int(item, "integer"));
      continue;
    }
    const auto tail = item.substr(dots + 2);
    const auto colon = tail.find(':');
    const int lo = parse_int(item.substr(0, dots), "range start");
    const int hi = parse_int(tail.substr(0, colon), "range end");
    const int step =
        colon == std::string_view::npos ? 1 : parse_int(tail.substr(colon + 1), "range step");
    if (step <= 0 || hi < lo) throw ConfigError("bad range '" + std::string(item) + "'");
    for (int v = lo; v <= hi; v += step) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

GdConfig parse_algorithm(const std::string& text, const GdConfig& base) {
  GdConfig gd = base;
  if (text == "batch") {
    gd.algorithm = Algorithm::batch;
  } else if (text == "sgd") {
    gd.algorithm = Algorithm::sgd;
  } else if (text.starts_with("minibatch=")) {
    gd.algorithm = Algorithm::minibatch;
    const int b = parse_int(std::string_view(text).substr(10), "mini-batch size");
    if (b < 1) throw ConfigError("mini-batch size must be positive");
    gd.batch_size = static_cast<std::size_t>(b);
  } else {
    throw ConfigError("unknown algorithm '" + text +
                      "' (expected batch, sgd or minibatch=<b>)");
  }
  return gd;
}

std::string csv_header() {
  return "protocol,delta,workers,features,examples,algorithm,batch_size,run_index,"
         "iterations,wall_ms,final_loss";
}

OracleReport run_oracle(int workers, int iters) {
  OracleReport r;
  r.workers = workers;
  r.iters = iters;
  r.total = enumerate_interleavings(workers, iters, [&](const History& h) {
    const bool bsp = check_bsp(h).valid;
    const bool rcwc = check_rcwc(h, 0).valid;
    const bool seq = check_sequential(h).valid;
    r.bsp_valid += bsp;
    r.rcwc_valid += rcwc;
    r.sequential_valid += seq;
    r.bsp_not_sequential += bsp && !seq;
    r.rcwc_not_sequential += rcwc && !seq;
    r.bsp_not_rcwc += bsp && !rcwc;
    r.sequential_not_rcwc += seq && !rcwc;
    if (rcwc && !bsp) {
      ++r.rcwc_not_bsp;
      if (!r.separating_example) r.separating_example = h;
    }
    if (!bsp && !rcwc && !seq) {
      ++r.invalid_everywhere;
      if (!r.invalid_example) r.invalid_example = h;
    }
    bool prev = rcwc;
    for (Iteration d = 1; d <= iters; ++d) {
      const bool next = check_rcwc(h, d).valid;
      r.delay_monotonicity_violations += prev && !next;
      prev = next;
    }
  });
  return r;
}

int cmd_gen_data(std::size_t examples, std::size_t features, double noise,
                 std::uint64_t seed, const std::filesystem::path& out) {
  const auto data = gen_synthetic(examples, features, noise, seed);
  save_sparse(out, data.dataset);
  return 0;
}

int cmd_run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  if (spec.repeats < 1 || (spec.repeats > 1 && spec.repeats < 5)) {
    err << "error: --repeats must be 1 (single run) or at least 5 (trimmed mean)\n";
    return 2;
  }
  if (spec.history_out && spec.cells() != 1) {
    err << "error: --record-history needs exactly one protocol/workers/algorithm/data "
           "combination, got "
        << spec.cells() << "\n";
    return 2;
  }

  std::vector<std::shared_ptr<const Dataset>> datasets;
  for (const auto& path : spec.data) {
    datasets.push_back(std::make_shared<const Dataset>(load_sparse(path)));
  }
  std::vector<RunConfig> grid;
  for (const auto& d : datasets) {
    for (const auto& protocol : spec.protocols) {
      for (int p : spec.workers) {
        for (const auto& gd : spec.algorithms) {
          RunConfig cfg;
          cfg.protocol = protocol;
          cfg.workers = p;
          cfg.dataset = d;
          cfg.gd = gd;
          cfg.straggler = spec.straggler;
          cfg.record_history = spec.history_out.has_value();
          cfg.timing_seed = spec.timing_seed;
          cfg.watchdog = spec.watchdog;
          cfg.validate();
          grid.push_back(std::move(cfg));
        }
      }
    }
  }

  std::ofstream file;
  if (spec.out) {
    file.open(*spec.out, std::ios::binary);
    if (!file) {
      err << "error: cannot write " << spec.out->string() << "\n";
      return 2;
    }
  }
  std::ostream& csv = spec.out ? file : out;
  csv << csv_header() << '\n';
  for (const auto& cfg : grid) {
    const auto prefix = row_prefix(cfg);
    std::vector<RunResult> runs;
    std::optional<double> summary;
    if (spec.repeats == 1) {
      runs.push_back(run_parallel(cfg));
    } else {
      auto timed = timed_run(cfg, spec.repeats);
      runs = std::move(timed.runs);
      summary = timed.trimmed_mean_ms;
    }
    double iter_sum = 0.0;
    double loss_sum = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      csv << prefix << ',' << r << ',' << runs[r].iterations << ','
          << number(runs[r].wall_ms) << ',' << number(runs[r].final_loss) << '\n';
      iter_sum += static_cast<double>(runs[r].iterations);
      loss_sum += runs[r].final_loss;
    }
    if (summary) {
      const auto count = static_cast<double>(runs.size());
      csv << prefix << ",trimmed_mean," << number(iter_sum / count) << ','
          << number(*summary) << ',' << number(loss_sum / count) << '\n';
    }
    if (spec.history_out) save_history(*spec.history_out, *runs.front().history);
  }
  return 0;
}

int cmd_check(const std::filesystem::path& history, const std::string& mode,
              Iteration delta, std::ostream& out) {
  const auto h = load_history(history);
  Verdict v;
  if (mode == "sequential") {
    v = check_sequential(h);
  } else if (mode == "rcwc") {
    v = check_rcwc(h, delta);
  } else if (mode == "bsp") {
    v = check_bsp(h);
  } else {
    throw ConfigError("unknown mode '" + mode + "' (expected sequential, rcwc or bsp)");
  }
  out << describe(v) << '\n';
  return v.valid ? 0 : 1;
}

int cmd_oracle(int workers, int iters, std::ostream& out) {
  const auto r = run_oracle(workers, iters);
  out << "workers " << r.workers << " iterations " << r.iters << "\n"
      << "histories " << r.total << "\n"
      << "bsp_valid " << r.bsp_valid << "\n"
      << "rcwc_valid " << r.rcwc_valid << "\n"
      << "sequential_valid " << r.sequential_valid << "\n"
      << "rcwc_not_bsp " << r.rcwc_not_bsp << "\n"
      << "sequential_not_rcwc " << r.sequential_not_rcwc << "\n"
      << "invalid_everywhere " << r.invalid_everywhere << "\n"
      << "bsp_implies_sequential " << (r.bsp_not_sequential == 0 ? "holds" : "FAILS") << "\n"
      << "rcwc_implies_sequential " << (r.rcwc_not_sequential == 0 ? "holds" : "FAILS") << "\n"
      << "bsp_subset_of_rcwc " << (r.bsp_not_rcwc == 0 ? "holds" : "FAILS")
      << (r.rcwc_not_bsp > 0 ? " (strict)" : "") << "\n"
      << "delay_monotone " << (r.delay_monotonicity_violations == 0 ? "holds" : "FAILS")
      << "\n";
  auto print = [&out](const char* label, const History& h) {
    out << label << ":";
    for (const auto& op : h.ops) out << ' ' << to_string(op);
    out << "\n";
  };
  if (r.separating_example) print("separating_example", *r.separating_example);
  if (r.invalid_example) print("invalid_example", *r.invalid_example);
  return r.inclusions_hold() ? 0 : 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Data-centric synchronization engine for iterative ML computations"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic linear-regression dataset");
  std::size_t examples = 5000;
  std::size_t features = 960;
  double noise = 0.0;
  std::uint64_t data_seed = 1;
  std::string data_out;
  gen->add_option("--examples", examples, "Number of examples")->check(CLI::PositiveNumber);
  gen->add_option("--features", features, "Number of features")->check(CLI::PositiveNumber);
  gen->add_option("--noise", noise, "Target noise standard deviation")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", data_seed, "Generator seed");
  gen->add_option("--out", data_out, "Output path")->required();

  auto* run = app.add_subcommand("run", "Run experiments and print CSV");
  std::vector<std::string> data_paths;
  std::string protocols = "rcwc";
  std::string workers = "4";
  std::string algos = "batch";
  std::optional<double> eta;
  double lambda = 0.0;
  Iteration max_iters = 100;
  double tol = 1e-8;
  int repeats = 10;
  std::string straggler = "none";
  std::string history_out;
  std::string csv_out;
  std::uint64_t sample_seed = 0;
  std::uint64_t timing_seed = 0;
  int watchdog_ms = 10'000;
  run->add_option("--data", data_paths, "Dataset file(s)")->required()->delimiter(',');
  run->add_option("--protocol", protocols, "bsp|rcwc|delay=<d>|async, comma-separated");
  run->add_option("--workers", workers, "Worker counts: 4, 2,4,8 or 6..40[:step]");
  run->add_option("--algo", algos, "batch|sgd|minibatch=<b>, comma-separated");
  run->add_option("--eta", eta, "Learning rate (default 1e-3/n)");
  run->add_option("--lambda", lambda, "L2 regularization weight");
  run->add_option("--max-iters", max_iters, "Iteration cap");
  run->add_option("--tol", tol, "Stop when the parameter step norm is at most this");
  run->add_option("--repeats", repeats, "1, or >= 5 for a trimmed-mean summary row");
  run->add_option("--straggler", straggler, "none | uniform:LO:HI | slow:WORKER:MS");
  run->add_option("--record-history", history_out, "Write the first run's history here");
  run->add_option("--out", csv_out, "CSV output path (default stdout)");
  run->add_option("--seed", sample_seed, "Sample seed for sgd/minibatch");
  run->add_option("--timing-seed", timing_seed, "Base seed for straggler delays");
  run->add_option("--watchdog-ms", watchdog_ms, "Deadlock watchdog interval");

  auto* check = app.add_subcommand("check", "Check a history file");
  std::string history_path;
  std::string mode;
  Iteration delta = 0;
  CLI::Option* delta_opt = nullptr;
  check->add_option("--history", history_path, "History file")->required();
  check->add_option("--mode", mode, "sequential|rcwc|bsp")
      ->required()
      ->check(CLI::IsMember({"sequential", "rcwc", "bsp"}));
  delta_opt = check->add_option("--delta", delta, "Admissible delay for rcwc")
                  ->check(CLI::NonNegativeNumber);

  auto* oracle = app.add_subcommand("oracle", "Enumerate interleavings and verify inclusions");
  int oracle_workers = 2;
  int oracle_iters = 2;
  oracle->add_option("--workers", oracle_workers, "Workers (<= 3)");
  oracle->add_option("--iters", oracle_iters, "Iterations (<= 2)");

  std::vector<std::string> argv_store{"dcsync"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(examples, features, noise, data_seed, data_out);
    }
    if (run->parsed()) {
      ExperimentSpec spec;
      spec.data.assign(data_paths.begin(), data_paths.end());
      std::string_view rest(protocols);
      while (true) {
        const auto comma = rest.find(',');
        spec.protocols.push_back(parse_protocol(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      spec.workers = parse_int_list(workers);
      GdConfig base;
      base.eta = eta;
      base.lambda = lambda;
      base.max_iters = max_iters;
      base.tol = tol;
      base.sample_seed = sample_seed;
      std::stringstream algo_list(algos);
      for (std::string a; std::getline(algo_list, a, ',');) {
        spec.algorithms.push_back(parse_algorithm(a, base));
      }
      spec.straggler = parse_straggler(straggler);
      spec.repeats = repeats;
      spec.timing_seed = timing_seed;
      spec.watchdog = std::chrono::milliseconds(watchdog_ms);
      if (!history_out.empty()) spec.history_out = history_out;
      if (!csv_out.empty()) spec.out = csv_out;
      return cmd_run(spec, out, err);
    }
    if (check->parsed()) {
      if (delta_opt->count() > 0 && mode != "rcwc") {
        err << "error: --delta only applies to --mode rcwc\n";
        return 2;
      }
      return cmd_check(history_path, mode, delta, out);
    }
    if (oracle->parsed()) return cmd_oracle(oracle_workers, oracle_iters, out);
  } catch (const HistoryParseError& e) {
    err << "error: " << history_path << ": " << e.what() << "\n";
    return 2;
  } catch (const DatasetParseError& e) {
    err << "error: dataset " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const MalformedHistory& e) {
    err << "error: malformed history: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dcsync
