#include "barw/cli.hpp"
#include "barw/parallel.hpp"
#include "barw/profiles.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

const char* kFooter = R"(Output files (all floats with 17 significant digits):
  simulate     density.csv   t,time,occupied,global_density,local_min,local_max,local_origin
               snapshot_<t>.barw  binary snapshot, see docs/formats.md
  certify      certify.json
  block-probe  reports.json, trials.csv (trial,gamma,precondition,a_spread,a_couple,
               items_hold,disagreements_3Ls), gamma_field.csv (x1..xd,n,gamma,a_spread,a_couple)
  lineage      paths.csv (path,k,x1..xd,drift1..d,Y1..d), moments.csv (k,mean1..d,var1..d),
               stats.json
Every run writes manifest.json. Exit codes: 0 pass, 1 criterion failure, 2 usage or config error.)";

struct RunFlags {
  std::string config;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
  sub->add_option("--config", f.config, "key = value config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "overrides run.seed");
  sub->add_option("--threads", f.threads, "worker threads (default BARW_THREADS, else hardware)");
  sub->add_option("--out-dir", f.out_dir, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = barw::cli;
  CLI::App app{"barw: branching annihilating random walk simulator and verification workbench"};
  app.footer(kFooter);
  app.require_subcommand(1);

  RunFlags flags;
  std::vector<CLI::App*> runs;
  for (const char* name : {"simulate", "certify", "block-probe", "lineage"}) {
    runs.push_back(app.add_subcommand(name));
    add_run_flags(runs.back(), flags);
  }
  runs[0]->description("burn-in and trajectory; snapshots and density time series");
  runs[1]->description("comparison density profile certification");
  runs[2]->description("block coupling trials and goodness field");
  runs[3]->description("ancestral lineage ensemble with LLN / CLT diagnostics");
  std::string verify_dir;
  int verify_threads = 0;
  auto* verify = app.add_subcommand("verify", "check an output directory against its manifest and replay it");
  verify->add_option("--dir", verify_dir, "output directory")->required()->check(CLI::ExistingDirectory);
  verify->add_option("--threads", verify_threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    if (verify->parsed()) {
      const auto v = cli::verify_directory(verify_dir, barw::resolve_threads(verify_threads));
      for (const auto& m : v.mismatches) std::cout << "mismatch: " << m << '\n';
      std::cout << (v.ok() ? "verified" : "NOT reproducible") << '\n';
      return v.ok() ? cli::kExitPass : cli::kExitFail;
    }
    for (auto* sub : runs) {
      if (!sub->parsed()) continue;
      cli::Settings s = cli::Settings::parse_file(flags.config);
      if (flags.seed) s.set("run.seed", std::to_string(*flags.seed));
      const cli::RunContext ctx{flags.out_dir, barw::resolve_threads(flags.threads)};
      const auto m = cli::run_command(sub->get_name(), s, ctx);
      std::cout << sub->get_name() << ": exit " << m.exit_code << ", " << m.outputs.size()
                << " outputs in " << flags.out_dir << '\n';
      return m.exit_code;
    }
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const barw::NestingFailure& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const std::logic_error& e) {
    // DomainError, TorusTooSmall and other bad parameter sets
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return cli::kExitFail;
  }
  return cli::kExitUsage;
}
