// Command-line front end. Talks to the library only through sign_c.h.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sign_c.h"

namespace {

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

int report(sign_status status) {
    std::fprintf(stderr, "error: category=%s message=%s\n", sign_last_error_category(),
                 one_line(sign_last_error()).c_str());
    return static_cast<int>(status);
}

struct ConfigHandle {
    sign_config* p = sign_config_new();
    ~ConfigHandle() { sign_config_free(p); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Score-based idempotent generative networks at desk scale"};
    cli.require_subcommand(1, 1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    std::string seed;

    for (std::size_t i = 0; i < sign_command_count(); ++i) {
        CLI::App* sub = cli.add_subcommand(sign_command_name(i));
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--set", overrides, "override key=value (repeatable)");
        sub->add_option("--out", out_dir, "artifact directory");
        sub->add_option("--seed", seed, "run seed (overrides config and SIGN_SEED)");
    }

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: category=config message=%s\n", one_line(e.what()).c_str());
        return SIGN_ERR_CONFIG;
    }
    const std::string command = cli.get_subcommands().front()->get_name();

    ConfigHandle cfg;
    if (!cfg.p) {
        std::fprintf(stderr, "error: category=memory message=cannot allocate config\n");
        return SIGN_ERR_OTHER;
    }
    sign_status st = SIGN_OK;
    if (!config_path.empty() && (st = sign_config_load(cfg.p, config_path.c_str())) != SIGN_OK) return report(st);
    if (const char* env = std::getenv("SIGN_SEED"); env && *env) {
        if ((st = sign_config_set(cfg.p, "seed", env)) != SIGN_OK) return report(st);
    }
    for (const auto& o : overrides) {
        if ((st = sign_config_assign(cfg.p, o.c_str())) != SIGN_OK) return report(st);
    }
    if (!seed.empty() && (st = sign_config_set(cfg.p, "seed", seed.c_str())) != SIGN_OK) return report(st);

    if ((st = sign_run(command.c_str(), cfg.p, out_dir.c_str())) != SIGN_OK) return report(st);
    return 0;
}
