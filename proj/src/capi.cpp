#include "sign_c.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "sign/app.hpp"
#include "sign/config.hpp"
#include "sign/error.hpp"
#include "sign/trainer.hpp"

struct sign_config {
    sign::Config cfg;
};

struct sign_model {
    sign::diff::MlpNet net;
};

namespace {

thread_local std::string g_message;
thread_local std::string g_category;

sign_status status_for(sign::ErrorKind kind) {
    switch (kind) {
        case sign::ErrorKind::config: return SIGN_ERR_CONFIG;
        case sign::ErrorKind::data:
        case sign::ErrorKind::format:
        case sign::ErrorKind::dimension: return SIGN_ERR_DATA;
        case sign::ErrorKind::divergence: return SIGN_ERR_DIVERGENCE;
        case sign::ErrorKind::io: return SIGN_ERR_IO;
        default: return SIGN_ERR_OTHER;
    }
}

sign_status fail(sign_status code, const char* category, const std::string& message) {
    g_category = category;
    g_message = message;
    return code;
}

template <typename F>
sign_status guarded(F&& body) {
    g_message.clear();
    g_category.clear();
    try {
        body();
        return SIGN_OK;
    } catch (const sign::Error& e) {
        return fail(status_for(e.kind()), sign::to_string(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(SIGN_ERR_OTHER, "memory", "out of memory");
    } catch (const std::exception& e) {
        return fail(SIGN_ERR_OTHER, "internal", e.what());
    } catch (...) {
        return fail(SIGN_ERR_OTHER, "internal", "unknown failure");
    }
}

sign_status null_arg(const char* what) { return fail(SIGN_ERR_OTHER, "contract", std::string(what) + " is null"); }

}  // namespace

extern "C" {

const char* sign_version(void) { return "1.0.0"; }

const char* sign_last_error(void) { return g_message.c_str(); }

const char* sign_last_error_category(void) { return g_category.c_str(); }

sign_config* sign_config_new(void) {
    try {
        return new sign_config{};
    } catch (...) {
        return nullptr;
    }
}

void sign_config_free(sign_config* cfg) { delete cfg; }

sign_status sign_config_load(sign_config* cfg, const char* path) {
    if (!cfg || !path) return null_arg("config or path");
    return guarded([&] { cfg->cfg.merge_text(sign::read_text(path)); });
}

sign_status sign_config_set(sign_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return null_arg("config, key or value");
    return guarded([&] { cfg->cfg.set(key, value); });
}

sign_status sign_config_assign(sign_config* cfg, const char* assignment) {
    if (!cfg || !assignment) return null_arg("config or assignment");
    return guarded([&] { cfg->cfg.assign(assignment); });
}

sign_status sign_config_get(const sign_config* cfg, const char* key, char* buf, size_t len, size_t* needed) {
    if (!cfg || !key) return null_arg("config or key");
    return guarded([&] {
        const std::string& v = cfg->cfg.get(key);
        if (needed) *needed = v.size() + 1;
        if (buf && len > 0) {
            const std::size_t n = std::min(len - 1, v.size());
            std::memcpy(buf, v.data(), n);
            buf[n] = '\0';
        }
    });
}

size_t sign_config_key_count(void) { return sign::Config::keys().size(); }

const char* sign_config_key(size_t index) {
    const auto& k = sign::Config::keys();
    return index < k.size() ? k[index].c_str() : nullptr;
}

sign_status sign_run(const char* command, const sign_config* cfg, const char* out_dir) {
    if (!command || !cfg || !out_dir) return null_arg("command, config or output directory");
    return guarded([&] { sign::app::run(command, cfg->cfg, out_dir); });
}

size_t sign_command_count(void) { return sign::app::commands().size(); }

const char* sign_command_name(size_t index) {
    const auto& c = sign::app::commands();
    return index < c.size() ? c[index].c_str() : nullptr;
}

sign_status sign_model_load(const char* path, sign_model** out) {
    if (!path || !out) return null_arg("path or output handle");
    *out = nullptr;
    return guarded([&] { *out = new sign_model{sign::load_net(sign::load_checkpoint(path))}; });
}

void sign_model_free(sign_model* model) { delete model; }

size_t sign_model_dim(const sign_model* model) { return model ? model->net.dim() : 0; }

sign_status sign_model_apply(const sign_model* model, const double* in, size_t rows, double* out) {
    if (!model || !in || !out) return null_arg("model, input or output");
    return guarded([&] {
        const std::size_t d = model->net.dim();
        sign::diff::Tensor x({rows, d}, std::vector<double>(in, in + rows * d));
        const sign::diff::Tensor y = model->net.forward(x);
        std::memcpy(out, y.data(), rows * d * sizeof(double));
    });
}

}  // extern "C"
