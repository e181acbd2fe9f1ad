// chcds: command-line front end.
//
//   chcds run --config exp.cfg [--seed N] [--out-dir DIR] [--workers W]
//   chcds predict --data train.csv --config exp.cfg --queries q.csv [--out-dir DIR]
//   chcds scenarios
//   chcds generate --scenario NAME --n N --seed S --out data.csv

#include <chcds/chcds.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

namespace {

constexpr int exit_runtime = 1;
constexpr int exit_config = 2;

int
cmd_run(const std::string& config_path,
        std::optional<std::uint64_t> seed,
        const std::string& out_dir,
        std::optional<std::size_t> workers)
{
  chcds::ExperimentConfig config;
  try {
    config = chcds::load_config(config_path);
    if (seed)
      config.master_seed = *seed;
    if (workers)
      config.workers = *workers;
    if (!config.scenario)
      throw chcds::ConfigError("missing required key 'scenario'");
    chcds::validate(config);
  } catch (const std::exception& e) {
    std::cerr << "chcds run: config error: " << e.what() << '\n';
    return exit_config;
  }
  try {
    const auto res = chcds::run(config);
    chcds::write_outputs(out_dir, res);
    for (const auto& a : res.methods)
      std::cout << chcds::method_name(a.method) << ": coverage " << a.coverage << " (se "
                << a.coverage_se << "), mean size " << a.mean_size << ", cad " << a.cad
                << ", infinite rate " << a.infinite_rate << '\n';
  } catch (const chcds::ConfigError& e) {
    std::cerr << "chcds run: config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "chcds run: " << e.what() << '\n';
    return exit_runtime;
  }
  return 0;
}

int
cmd_predict(const std::string& data_path,
            const std::string& config_path,
            const std::string& query_path,
            const std::string& out_dir)
{
  chcds::ExperimentConfig config;
  chcds::Dataset data;
  chcds::QueryTable queries;
  try {
    config = chcds::load_config(config_path);
    data = chcds::load_csv(data_path);
    queries = chcds::load_queries(query_path);
    if (queries.dim != data.dim())
      throw chcds::DataError("query file has " + std::to_string(queries.dim) +
                             " covariate columns, data has " + std::to_string(data.dim()));
  } catch (const std::exception& e) {
    std::cerr << "chcds predict: " << e.what() << '\n';
    return exit_config;
  }
  try {
    // seeded shuffle, then train / calibration by train_fraction
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    chcds::Rng rng = chcds::make_rng(config.master_seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(
      std::llround(config.train_fraction * static_cast<double>(data.size())));
    if (n_train < 2 || n_train >= data.size())
      throw chcds::ConfigError("train_fraction leaves an empty training or calibration split");
    const std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<std::size_t> cal_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    const auto train = data.subset(train_rows);
    const auto cal = data.subset(cal_rows);

    const auto model = chcds::fit_model(config, train, config.master_seed);
    const chcds::ResponseGrid grid(chcds::padded_range(train.responses(), config.pad_sd),
                                   config.grid_points);
    const auto predictor = chcds::ConformalPredictor::calibrate(
      model, config.methods.front(), cal, config.alpha, grid, config.gamma, config.hdr_level);

    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "predictions.csv");
    out << "query_id,interval_index,lower,upper,infinite_flag\n";
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const auto set = predictor.predict(queries.row(q));
      for (std::size_t k = 0; k < set.intervals.size(); ++k)
        out << q << ',' << k << ',' << chcds::format_double(set.intervals[k].lower) << ','
            << chcds::format_double(set.intervals[k].upper) << ',' << (set.infinite ? 1 : 0)
            << '\n';
    }
    std::cout << "wrote " << queries.size() << " prediction sets (qhat "
              << predictor.calibration().qhat << ")\n";
  } catch (const chcds::ConfigError& e) {
    std::cerr << "chcds predict: config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "chcds predict: " << e.what() << '\n';
    return exit_runtime;
  }
  return 0;
}

int
cmd_scenarios()
{
  for (auto kind : chcds::all_scenarios)
    std::cout << chcds::scenario_name(kind) << "\t" << chcds::scenario_summary(kind) << '\n';
  return 0;
}

int
cmd_generate(const std::string& scenario, std::size_t n, std::uint64_t seed, const std::string& out)
{
  try {
    const auto data = chcds::generate({ chcds::parse_scenario(scenario), n, seed });
    if (out.empty() || out == "-")
      chcds::write_csv(std::cout, data);
    else
      chcds::write_csv(out, data);
  } catch (const chcds::ConfigError& e) {
    std::cerr << "chcds generate: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "chcds generate: " << e.what() << '\n';
    return exit_runtime;
  }
  return 0;
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Conformalized highest conditional density sets" };
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  auto* run = app.add_subcommand("run", "run a Monte Carlo experiment from a config file");
  run->add_option("--config", config_path, "experiment config")->required();
  run->add_option("--seed", seed, "master seed (overrides config)");
  run->add_option("--out-dir", out_dir, "output directory");
  run->add_option("--workers", workers, "replicate worker threads");

  std::string data_path, query_path;
  auto* predict = app.add_subcommand("predict", "fit, calibrate and predict on CSV data");
  predict->add_option("--data", data_path, "training + calibration CSV")->required();
  predict->add_option("--config", config_path, "estimator / method config")->required();
  predict->add_option("--queries", query_path, "covariate-only query CSV")->required();
  predict->add_option("--out-dir", out_dir, "output directory");

  app.add_subcommand("scenarios", "list built-in scenarios");

  std::string scenario, out_path;
  std::size_t n = 1000;
  std::uint64_t gen_seed = 1;
  auto* generate = app.add_subcommand("generate", "dump a simulated dataset as CSV");
  generate->add_option("--scenario", scenario, "scenario name")->required();
  generate->add_option("--n", n, "sample size");
  generate->add_option("--seed", gen_seed, "seed");
  generate->add_option("--out", out_path, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  if (run->parsed())
    return cmd_run(config_path, seed, out_dir, workers);
  if (predict->parsed())
    return cmd_predict(data_path, config_path, query_path, out_dir);
  if (generate->parsed())
    return cmd_generate(scenario, n, gen_seed, out_path);
  return cmd_scenarios();
}
