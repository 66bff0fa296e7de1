#include "sdr/sdr.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "clipgen/archive.hpp"
#include "clipgen/generate.hpp"
#include "core/crc32.hpp"
#include "core/errors.hpp"
#include "model/model.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"
#include "train/experiments.hpp"
#include "train/trainer.hpp"

namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error = "no error";

void set_error(const std::string& msg) { g_last_error = msg; }

sdr_status to_status(const std::exception& e) {
    set_error(e.what());
    if (dynamic_cast<const sdr::ConfigError*>(&e)) return SDR_ERR_CONFIG;
    if (dynamic_cast<const sdr::DataError*>(&e)) return SDR_ERR_DATA;
    if (dynamic_cast<const sdr::NumericError*>(&e)) return SDR_ERR_NUMERIC;
    if (dynamic_cast<const sdr::IoError*>(&e)) return SDR_ERR_IO;
    return SDR_ERR_INTERNAL;
}

template <typename Fn>
sdr_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return to_status(e);
    } catch (...) {
        set_error("unknown failure");
        return SDR_ERR_INTERNAL;
    }
}

sdr_status invalid(const char* msg) {
    set_error(msg);
    return SDR_ERR_INVALID;
}

sdr::train::LogFn wrap_log(sdr_log_fn log, void* user) {
    if (!log) return nullptr;
    return [log, user](const std::string& line) { log(line.c_str(), user); };
}

std::string config_digest(const std::string& text) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", sdr::core::crc32(text.data(), text.size()));
    return buf;
}

bool dir_nonempty(const fs::path& p) {
    std::error_code ec;
    if (!fs::exists(p, ec)) return false;
    return fs::is_directory(p, ec) && !fs::is_empty(p, ec);
}

void emit_row(const std::string& row, sdr_row_fn on_row, void* user, std::ofstream* file) {
    if (on_row) on_row(row.c_str(), user);
    if (file && file->is_open()) {
        (*file) << row << '\n';
        file->flush();
    }
}

} // namespace

struct sdr_dataset {
    std::vector<sdr::clipgen::Clip> clips;
    std::vector<sdr::clipgen::ManifestRow> manifest;
};

struct sdr_model {
    sdr::train::TrainConfig cfg;
    std::vector<std::pair<std::string, sdr::core::Tensor<float>>> tensors;
};

extern "C" {

const char* sdr_version(void) { return "0.1.0"; }

const char* sdr_last_error(void) { return g_last_error.c_str(); }

sdr_status sdr_dataset_generate(const char* config_json, sdr_dataset** out) {
    if (!config_json || !out) return invalid("sdr_dataset_generate: NULL argument");
    return guarded([&] {
        const auto spec = sdr::train::parse_dataset_config(config_json);
        auto [clips, manifest] = sdr::clipgen::gen_dataset(spec);
        *out = new sdr_dataset{std::move(clips), std::move(manifest)};
        return SDR_OK;
    });
}

sdr_status sdr_dataset_load(const char* dir, sdr_dataset** out) {
    if (!dir || !out) return invalid("sdr_dataset_load: NULL argument");
    return guarded([&] {
        auto ds = std::make_unique<sdr_dataset>();
        ds->clips = sdr::clipgen::read_archive((fs::path(dir) / "clips.sdrc").string());
        const fs::path manifest = fs::path(dir) / "manifest.csv";
        if (fs::exists(manifest)) ds->manifest = sdr::clipgen::read_manifest(manifest.string());
        *out = ds.release();
        return SDR_OK;
    });
}

sdr_status sdr_dataset_write(const sdr_dataset* ds, const char* out_dir, int force) {
    if (!ds || !out_dir) return invalid("sdr_dataset_write: NULL argument");
    return guarded([&] {
        const fs::path dir(out_dir);
        if (!force && dir_nonempty(dir)) {
            set_error("output directory is not empty (use force): " + dir.string());
            return SDR_ERR_OUTPUT_EXISTS;
        }
        fs::create_directories(dir);
        sdr::clipgen::write_archive((dir / "clips.sdrc").string(), ds->clips);
        sdr::clipgen::write_manifest((dir / "manifest.csv").string(), ds->manifest);
        return SDR_OK;
    });
}

sdr_status sdr_dataset_info(const sdr_dataset* ds, uint32_t* count, uint32_t* t, uint32_t* c,
                            uint32_t* h, uint32_t* w) {
    if (!ds) return invalid("sdr_dataset_info: NULL dataset");
    if (ds->clips.empty()) return invalid("sdr_dataset_info: empty dataset");
    if (count) *count = static_cast<uint32_t>(ds->clips.size());
    if (t) *t = static_cast<uint32_t>(ds->clips.front().t);
    if (c) *c = static_cast<uint32_t>(ds->clips.front().c);
    if (h) *h = static_cast<uint32_t>(ds->clips.front().h);
    if (w) *w = static_cast<uint32_t>(ds->clips.front().w);
    return SDR_OK;
}

void sdr_dataset_free(sdr_dataset* ds) { delete ds; }

sdr_status sdr_train(const char* config_json, const char* data_dir, const char* out_dir,
                     int dry_run, sdr_log_fn log, void* log_user, sdr_run_metrics* metrics_out) {
    if (!config_json || !data_dir || !out_dir) return invalid("sdr_train: NULL argument");
    return guarded([&] {
        const std::string config_text = config_json;
        auto cfg = sdr::train::parse_train_config(config_text);
        const fs::path data(data_dir);
        const auto train_path = data / cfg.data.train_subdir / "clips.sdrc";
        const auto test_path = data / cfg.data.test_subdir / "clips.sdrc";
        if (!fs::exists(train_path)) {
            throw sdr::DataError("training archive missing: " + train_path.string());
        }
        if (!fs::exists(test_path)) {
            throw sdr::DataError("test archive missing: " + test_path.string());
        }
        auto train_clips = sdr::clipgen::read_archive(train_path.string());
        auto test_clips = sdr::clipgen::read_archive(test_path.string());
        const auto logf = wrap_log(log, log_user);

        if (dry_run) {
            cfg.model.t_in = train_clips.front().t;
            cfg.model.input_channels = train_clips.front().c;
            cfg.validate();
            sdr::core::ParamStore<float> ps(cfg.seed);
            sdr::model::init_params(ps, cfg.model);
            std::vector<std::size_t> by_label[2];
            for (std::size_t i = 0; i < train_clips.size(); ++i) {
                by_label[train_clips[i].label].push_back(i);
            }
            const int steps_per_epoch =
                static_cast<int>(std::min(by_label[0].size(), by_label[1].size())) /
                (cfg.batch_size / 2);
            if (logf) {
                logf("dry run: " + std::to_string(ps.scalar_count()) + " parameters in " +
                     std::to_string(ps.count()) + " tensors");
                logf("dry run: " + std::to_string(cfg.epochs) + " epochs x " +
                     std::to_string(steps_per_epoch) + " steps (batch " +
                     std::to_string(cfg.batch_size) + "), nothing written");
            }
            if (metrics_out) {
                *metrics_out = {};
                metrics_out->param_count = static_cast<uint64_t>(ps.scalar_count());
                metrics_out->steps = static_cast<uint64_t>(steps_per_epoch * cfg.epochs);
            }
            return SDR_OK;
        }

        const auto result = sdr::train::train_run(cfg, train_clips, test_clips, logf);

        fs::create_directories(out_dir);
        const fs::path out(out_dir);
        sdr::train::save_checkpoint((out / "checkpoint.sdr1").string(), result.params);
        sdr::train::write_history_csv((out / "history.csv").string(), result.history);
        {
            std::ofstream os(out / "metrics.json", std::ios::binary);
            if (!os) throw sdr::IoError("cannot write metrics.json");
            os << "{\n"
               << "  \"config_digest\": \"" << config_digest(config_text) << "\",\n"
               << "  \"param_count\": " << result.metrics.param_count << ",\n"
               << "  \"seed\": " << cfg.seed << ",\n"
               << "  \"steps\": " << result.metrics.steps << ",\n"
               << "  \"test_acc\": " << sdr::train::fmt_g(result.metrics.test_acc) << ",\n"
               << "  \"test_auc\": " << sdr::train::fmt_g(result.metrics.test_auc) << ",\n"
               << "  \"train_acc\": " << sdr::train::fmt_g(result.metrics.train_acc) << ",\n"
               << "  \"train_auc\": " << sdr::train::fmt_g(result.metrics.train_auc) << "\n"
               << "}\n";
        }
        if (metrics_out) {
            metrics_out->train_auc = result.metrics.train_auc;
            metrics_out->train_acc = result.metrics.train_acc;
            metrics_out->test_auc = result.metrics.test_auc;
            metrics_out->test_acc = result.metrics.test_acc;
            metrics_out->steps = static_cast<uint64_t>(result.metrics.steps);
            metrics_out->param_count = static_cast<uint64_t>(result.metrics.param_count);
        }
        return SDR_OK;
    });
}

sdr_status sdr_model_load(const char* checkpoint_path, const char* config_json, sdr_model** out) {
    if (!checkpoint_path || !config_json || !out) return invalid("sdr_model_load: NULL argument");
    return guarded([&] {
        auto model = std::make_unique<sdr_model>();
        model->cfg = sdr::train::parse_train_config(config_json);
        model->tensors = sdr::train::load_checkpoint(checkpoint_path);
        *out = model.release();
        return SDR_OK;
    });
}

sdr_status sdr_model_evaluate(const sdr_model* model, const char* data_dir,
                              const char* split_subdir, double* auc, double* acc) {
    if (!model || !data_dir || !split_subdir) return invalid("sdr_model_evaluate: NULL argument");
    return guarded([&] {
        const auto path = fs::path(data_dir) / split_subdir / "clips.sdrc";
        if (!fs::exists(path)) throw sdr::DataError("archive missing: " + path.string());
        const auto clips = sdr::clipgen::read_archive(path.string());
        sdr::train::TrainConfig cfg = model->cfg;
        cfg.model.t_in = clips.front().t;
        cfg.model.input_channels = clips.front().c;
        cfg.validate();
        sdr::core::ParamStore<float> ps(cfg.seed);
        sdr::model::init_params(ps, cfg.model);
        if (model->tensors.size() != ps.count()) {
            throw sdr::DataError("checkpoint does not match model: tensor count differs");
        }
        for (const auto& [name, tensor] : model->tensors) {
            if (!ps.has(name)) throw sdr::DataError("checkpoint tensor not in model: " + name);
            if (ps.value(name).dims != tensor.dims) {
                throw sdr::DataError("checkpoint dims mismatch for " + name);
            }
            ps.value(name) = tensor;
        }
        const auto result = sdr::train::evaluate(ps, cfg.model, clips);
        if (auc) *auc = result.auc;
        if (acc) *acc = result.acc;
        return SDR_OK;
    });
}

sdr_status sdr_model_param_count(const sdr_model* model, uint64_t* count) {
    if (!model || !count) return invalid("sdr_model_param_count: NULL argument");
    uint64_t total = 0;
    for (const auto& [name, tensor] : model->tensors) {
        (void)name;
        total += static_cast<uint64_t>(tensor.size());
    }
    *count = total;
    return SDR_OK;
}

void sdr_model_free(sdr_model* model) { delete model; }

sdr_status sdr_gradcheck(const char* config_json, char* report_json, size_t report_len) {
    return guarded([&] {
        sdr::train::GradCheckSettings settings;
        if (config_json) settings = sdr::train::parse_gradcheck_config(config_json);
        const auto reports = sdr::train::run_gradcheck(settings);
        bool all_pass = true;
        std::string json = "{\"terms\":[";
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& r = reports[i];
            all_pass = all_pass && r.report.pass;
            if (i) json += ',';
            json += "{\"term\":\"" + r.term + "\",\"max_rel_err\":" +
                    sdr::train::fmt_g(r.report.max_rel_err) + ",\"worst_tensor\":\"" +
                    r.report.worst_tensor + "\",\"worst_coord\":" +
                    std::to_string(r.report.worst_coord) + ",\"coords_checked\":" +
                    std::to_string(r.report.coords_checked) +
                    ",\"pass\":" + (r.report.pass ? "true" : "false") + "}";
        }
        json += "],\"pass\":";
        json += all_pass ? "true" : "false";
        json += "}";
        if (report_json && report_len > 0) {
            if (json.size() + 1 > report_len) {
                set_error("report buffer too small: need " + std::to_string(json.size() + 1));
                return SDR_ERR_INVALID;
            }
            std::memcpy(report_json, json.c_str(), json.size() + 1);
        }
        if (!all_pass) {
            for (const auto& r : reports) {
                if (!r.report.pass) {
                    set_error("gradient check failed for " + r.term + " at tensor " +
                              r.report.worst_tensor + " coord " +
                              std::to_string(r.report.worst_coord) + " (rel err " +
                              sdr::train::fmt_g(r.report.max_rel_err) + ")");
                    break;
                }
            }
            return SDR_ERR_GRADCHECK;
        }
        return SDR_OK;
    });
}

sdr_status sdr_sweep_branches(const char* config_json, const char* n_list, const char* out_csv,
                              sdr_row_fn on_row, void* row_user, sdr_log_fn log, void* log_user) {
    if (!config_json || !n_list) return invalid("sdr_sweep_branches: NULL argument");
    return guarded([&] {
        const auto cfg = sdr::train::parse_experiment_config(config_json);
        std::vector<int> ns;
        std::string token;
        for (const char* p = n_list;; ++p) {
            if (*p == ',' || *p == '\0') {
                if (!token.empty()) {
                    try {
                        ns.push_back(std::stoi(token));
                    } catch (...) {
                        throw sdr::ConfigError("bad n-list entry: " + token);
                    }
                    token.clear();
                }
                if (*p == '\0') break;
            } else {
                token += *p;
            }
        }
        std::ofstream file;
        if (out_csv) {
            file.open(out_csv, std::ios::binary);
            if (!file) throw sdr::IoError(std::string("cannot open for writing: ") + out_csv);
        }
        emit_row("n,seed,auc,acc", on_row, row_user, &file);
        sdr::train::run_sweep(cfg, ns, wrap_log(log, log_user),
                              [&](const sdr::train::ExperimentRow& row) {
                                  emit_row(std::to_string(row.n_branches) + "," +
                                               std::to_string(row.seed) + "," +
                                               sdr::train::fmt_g(row.auc) + "," +
                                               sdr::train::fmt_g(row.acc),
                                           on_row, row_user, &file);
                              });
        return SDR_OK;
    });
}

sdr_status sdr_ablate(const char* config_json, const char* out_csv, sdr_row_fn on_row,
                      void* row_user, sdr_log_fn log, void* log_user) {
    if (!config_json) return invalid("sdr_ablate: NULL argument");
    return guarded([&] {
        const auto cfg = sdr::train::parse_experiment_config(config_json);
        std::ofstream file;
        if (out_csv) {
            file.open(out_csv, std::ios::binary);
            if (!file) throw sdr::IoError(std::string("cannot open for writing: ") + out_csv);
        }
        emit_row("tpa,trfi,contrastive,seed,auc,acc", on_row, row_user, &file);
        sdr::train::run_ablation(cfg, wrap_log(log, log_user),
                                 [&](const sdr::train::ExperimentRow& row) {
                                     emit_row(std::string(row.tpa ? "1" : "0") + "," +
                                                  (row.trfi ? "1" : "0") + "," +
                                                  (row.contrastive ? "1" : "0") + "," +
                                                  std::to_string(row.seed) + "," +
                                                  sdr::train::fmt_g(row.auc) + "," +
                                                  sdr::train::fmt_g(row.acc),
                                              on_row, row_user, &file);
                                 });
        return SDR_OK;
    });
}

} // extern "C"
