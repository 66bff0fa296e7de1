// sdr command-line tool. Links the C API only (sdr/sdr.h); every subcommand
// is a thin wrapper that reads a config file, calls into libsdr and maps the
// returned status straight to the process exit code.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sdr/sdr.h"

namespace {

int fail(sdr_status status) {
    std::cerr << "error: " << sdr_last_error() << "\n";
    return static_cast<int>(status);
}

std::string read_file_or_exit(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        std::cerr << "error: cannot read config file: " << path << "\n";
        std::exit(static_cast<int>(SDR_ERR_CONFIG));
    }
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void print_log(const char* line, void*) { std::cout << "[sdr] " << line << "\n"; }

void print_row(const char* row, void*) {
    std::cout << row << "\n";
    std::cout.flush();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "sdr - temporal-consistency video forgery detection on synthetic clips.\n"
        "CSV outputs use fixed headers:\n"
        "  history.csv:  record,step,epoch,l_mi,l_con,l_ce,total,mean_sum_kl,split,auc,acc\n"
        "  manifest.csv: video_id,label,style,kind,strength,seed\n"
        "  sweep:        n,seed,auc,acc\n"
        "  ablate:       tpa,trfi,contrastive,seed,auc,acc"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, n_list = "2,3,4,5", csv_path;
    bool force = false, dry_run = false;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic clip archive + manifest");
    gen->add_option("--config", config_path, "Dataset config (JSON)")->required();
    gen->add_option("--out", out_path, "Output directory")->required();
    gen->add_flag("--force", force, "Overwrite a nonempty output directory");

    auto* train = app.add_subcommand("train", "Train and evaluate one model");
    train->add_option("--config", config_path, "Train config (JSON)")->required();
    train->add_option("--data", data_path, "Directory holding train/ and test/ archives")->required();
    train->add_option("--out", out_path, "Output directory for checkpoint/history/metrics")->required();
    train->add_flag("--dry-run", dry_run, "Print the parameter count and step plan, write nothing");

    auto* sweep = app.add_subcommand("sweep-branches", "Style-shift sweep over branch counts");
    sweep->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sweep->add_option("--n-list", n_list, "Comma-separated branch counts (default 2,3,4,5)");
    sweep->add_option("--out", csv_path, "Also append rows to this CSV file");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of all loss terms");
    gradcheck->add_option("--config", config_path, "Gradcheck config (JSON), optional");

    auto* ablate = app.add_subcommand("ablate", "Component-combination study on the style-shift protocol");
    ablate->add_option("--config", config_path, "Experiment config (JSON)")->required();
    ablate->add_option("--out", csv_path, "Also append rows to this CSV file");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        const std::string config = read_file_or_exit(config_path);
        sdr_dataset* ds = nullptr;
        sdr_status st = sdr_dataset_generate(config.c_str(), &ds);
        if (st != SDR_OK) return fail(st);
        st = sdr_dataset_write(ds, out_path.c_str(), force ? 1 : 0);
        if (st != SDR_OK) {
            sdr_dataset_free(ds);
            return fail(st);
        }
        uint32_t count = 0, t = 0, c = 0, h = 0, w = 0;
        sdr_dataset_info(ds, &count, &t, &c, &h, &w);
        std::cout << "wrote " << count << " clips [" << t << "x" << c << "x" << h << "x" << w
                  << "] to " << out_path << "\n";
        sdr_dataset_free(ds);
        return 0;
    }

    if (train->parsed()) {
        const std::string config = read_file_or_exit(config_path);
        sdr_run_metrics metrics{};
        const sdr_status st = sdr_train(config.c_str(), data_path.c_str(), out_path.c_str(),
                                        dry_run ? 1 : 0, print_log, nullptr, &metrics);
        if (st != SDR_OK) return fail(st);
        if (!dry_run) {
            std::printf("train: auc %.6f acc %.6f | test: auc %.6f acc %.6f | %llu steps\n",
                        metrics.train_auc, metrics.train_acc, metrics.test_auc, metrics.test_acc,
                        static_cast<unsigned long long>(metrics.steps));
        }
        return 0;
    }

    if (sweep->parsed()) {
        const std::string config = read_file_or_exit(config_path);
        const sdr_status st =
            sdr_sweep_branches(config.c_str(), n_list.c_str(),
                               csv_path.empty() ? nullptr : csv_path.c_str(), print_row, nullptr,
                               print_log, nullptr);
        return st == SDR_OK ? 0 : fail(st);
    }

    if (gradcheck->parsed()) {
        std::string config;
        if (!config_path.empty()) config = read_file_or_exit(config_path);
        char report[8192];
        const sdr_status st = sdr_gradcheck(config_path.empty() ? nullptr : config.c_str(),
                                            report, sizeof(report));
        if (st == SDR_OK || st == SDR_ERR_GRADCHECK) std::cout << report << "\n";
        if (st != SDR_OK) return fail(st);
        return 0;
    }

    if (ablate->parsed()) {
        const std::string config = read_file_or_exit(config_path);
        const sdr_status st = sdr_ablate(config.c_str(),
                                         csv_path.empty() ? nullptr : csv_path.c_str(), print_row,
                                         nullptr, print_log, nullptr);
        return st == SDR_OK ? 0 : fail(st);
    }

    return 0;
}
