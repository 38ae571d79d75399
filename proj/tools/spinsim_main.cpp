#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <spinsim/runner.hpp>

namespace {

std::string trimmed(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Flat key=value file, one entry per line, # starts a comment. Keys use the
// long flag names without the leading dashes. Values given on the command
// line keep priority over the file.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw spinsim::ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trimmed(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw spinsim::ConfigError("config file: expected key=value, got '" + line + "'");
    const std::string key = trimmed(line.substr(0, eq));
    const std::string value = trimmed(line.substr(eq + 1));
    if (key.empty()) throw spinsim::ConfigError("config file: empty key in '" + line + "'");
    kv[key] = value;
  }
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spin-1/2 chain dynamics: brickwork circuits on matrix product states"};
  app.require_subcommand(1);

  spinsim::RunConfig cfg;
  std::string model = "kicked-ising";
  std::string basis = "z";
  double time = 0.0;

  CLI::App* run = app.add_subcommand("run", "simulate and write estimate / profile tables");
  // the field-strength flag --h needs the short help name freed up
  run->set_help_flag("--help", "print this help message and exit");
  std::string config_path;
  run->add_option("--config", config_path,
                  "flat key=value config file; command-line flags override it");
  run->add_option("--model", model, "kicked-ising | heisenberg")->capture_default_str();
  run->add_option("--n", cfg.model.n, "chain length");
  run->add_option("--time", time, "total evolution time");
  run->add_option("--dt", cfg.model.dt, "step length (kicked-ising fixes dt = 1)")
      ->capture_default_str();
  run->add_option("--j", cfg.model.j, "kicked-ising coupling")->capture_default_str();
  run->add_option("--h", cfg.model.h, "kicked-ising longitudinal field")->capture_default_str();
  run->add_option("--epsilon", cfg.epsilon, "relative discarded-weight bound per truncation")
      ->capture_default_str();
  run->add_option("--chi-max", cfg.chi_max, "bond dimension cap, 0 = uncapped")
      ->capture_default_str();
  run->add_option("--engine", cfg.engine, "sebd | tebd")->capture_default_str();
  run->add_option("--basis", basis, "projection basis: z | x | y | rdm")->capture_default_str();
  run->add_option("--observables", cfg.observables,
                  "comma list, e.g. sz, sx:bitstring, czz@7, uzx@7")
      ->capture_default_str();
  run->add_option("--samples", cfg.samples, "trajectories per family (sebd)")
      ->capture_default_str();
  run->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  run->add_option("--workers", cfg.workers, "worker threads (SPINSIM_WORKERS overrides)")
      ->capture_default_str();
  run->add_option("--output", cfg.output, "output path prefix")->capture_default_str();
  run->add_option("--format", cfg.format, "csv | json")->capture_default_str();
  run->add_option("--init", cfg.init, "neel | up | random")->capture_default_str();
  run->add_option("--init-chi", cfg.init_chi, "bond dimension for --init random")
      ->capture_default_str();
  run->add_option("--init-seed", cfg.init_seed, "seed for --init random")->capture_default_str();
  run->add_option("--snapshots", cfg.snapshots, "tebd snapshot times (default: final time)")
      ->delimiter(',');
  run->add_flag("--dump-schedule", cfg.dump_schedule, "also write the cone schedule JSON");

  CLI::App* verify = app.add_subcommand("verify", "run internal consistency checks");
  std::string verify_out;
  verify->add_option("--output", verify_out, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      bool have_n = run->count("--n") > 0;
      bool have_time = run->count("--time") > 0;
      if (!config_path.empty()) {
        auto given = [&](const std::string& flag) {
          const CLI::Option* o = run->get_option_no_throw("--" + flag);
          return o != nullptr && o->count() > 0;
        };
        for (const auto& [key, value] : read_config_file(config_path)) {
          if (given(key)) continue;
          try {
            if (key == "model") {
              model = value;
            } else if (key == "n") {
              cfg.model.n = std::stoul(value);
              have_n = true;
            } else if (key == "time") {
              time = std::stod(value);
              have_time = true;
            } else if (key == "dt") {
              cfg.model.dt = std::stod(value);
            } else if (key == "j") {
              cfg.model.j = std::stod(value);
            } else if (key == "h") {
              cfg.model.h = std::stod(value);
            } else if (key == "epsilon") {
              cfg.epsilon = std::stod(value);
            } else if (key == "chi-max") {
              cfg.chi_max = std::stoul(value);
            } else if (key == "engine") {
              cfg.engine = value;
            } else if (key == "basis") {
              basis = value;
            } else if (key == "observables") {
              cfg.observables = value;
            } else if (key == "samples") {
              cfg.samples = std::stoul(value);
            } else if (key == "seed") {
              cfg.seed = std::stoull(value);
            } else if (key == "workers") {
              cfg.workers = std::stoul(value);
            } else if (key == "output") {
              cfg.output = value;
            } else if (key == "format") {
              cfg.format = value;
            } else if (key == "init") {
              cfg.init = value;
            } else if (key == "init-chi") {
              cfg.init_chi = std::stoul(value);
            } else if (key == "init-seed") {
              cfg.init_seed = std::stoull(value);
            } else if (key == "snapshots") {
              cfg.snapshots.clear();
              std::size_t pos = 0;
              while (pos <= value.size()) {
                const std::size_t comma = value.find(',', pos);
                const std::string item = comma == std::string::npos
                                             ? value.substr(pos)
                                             : value.substr(pos, comma - pos);
                if (!trimmed(item).empty()) cfg.snapshots.push_back(std::stod(trimmed(item)));
                if (comma == std::string::npos) break;
                pos = comma + 1;
              }
            } else if (key == "dump-schedule") {
              cfg.dump_schedule = value == "true" || value == "1";
            } else {
              throw spinsim::ConfigError("config file: unknown key '" + key + "'");
            }
          } catch (const std::invalid_argument&) {
            throw spinsim::ConfigError("config file: bad value for '" + key + "': " + value);
          } catch (const std::out_of_range&) {
            throw spinsim::ConfigError("config file: bad value for '" + key + "': " + value);
          }
        }
      }
      if (!have_n) throw spinsim::ConfigError("--n is required");
      if (!have_time) throw spinsim::ConfigError("--time is required");
      cfg.model.model = spinsim::parse_model(model);
      cfg.model.t = time;
      cfg.basis = spinsim::parse_measure_basis(basis);
      if (const char* env = std::getenv("SPINSIM_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
          throw spinsim::ConfigError("SPINSIM_WORKERS must be a positive integer");
        cfg.workers = static_cast<std::size_t>(v);
      }
      const spinsim::RunOutput out = spinsim::execute_run(cfg);
      spinsim::write_outputs(out, cfg);
      return 0;
    }
    const nlohmann::json report = spinsim::verify_report(spinsim::verify_checks());
    if (verify_out.empty())
      std::cout << report.dump(2) << std::endl;
    else
      spinsim::write_file(verify_out, report.dump(2) + "\n");
    return report.at("passed").get<bool>() ? 0 : 3;
  } catch (const spinsim::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const spinsim::CapacityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const spinsim::ContractViolation& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return 3;
  } catch (const spinsim::ZeroProbabilityError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
