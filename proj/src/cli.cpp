#include "proxtune/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "proxtune/config.hpp"
#include "proxtune/errors.hpp"

namespace proxtune {

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed_override = -1;  // < 0: keep config seed
    int jobs = 1;
};

std::filesystem::path resolve_out_dir(const CommonOpts& opts, const ResolvedConfig& config) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    if (const char* env = std::getenv("PROXTUNE_OUT"); env && *env) return env;
    if (!config.out_dir.empty()) return config.out_dir;
    return ".";
}

ResolvedConfig load_resolved(const CommonOpts& opts) {
    ResolvedConfig config = load_config(opts.config_path);
    if (opts.seed_override >= 0)
        config.experiment.seed = static_cast<std::uint64_t>(opts.seed_override);
    return config;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::filesystem::path prepare_out_dir(const CommonOpts& opts, const ResolvedConfig& config) {
    const auto dir = resolve_out_dir(opts, config);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

// The archive must describe the same model the config builds.
void check_archive_matches(const ModelParameters& archive, const ModelSpec& spec) {
    const ModelParameters expected = build_model(spec);
    if (archive.module_count != expected.module_count)
        throw ArchiveMismatchError("archive has " + std::to_string(archive.module_count) +
                                   " modules, config expects " +
                                   std::to_string(expected.module_count));
    if (archive.groups.size() != expected.groups.size())
        throw ArchiveMismatchError("archive has " + std::to_string(archive.groups.size()) +
                                   " groups, config expects " +
                                   std::to_string(expected.groups.size()));
    for (std::size_t i = 0; i < archive.groups.size(); ++i) {
        const auto& a = archive.groups[i];
        const auto& e = expected.groups[i];
        if (a.name != e.name || a.module_index != e.module_index ||
            a.values.size() != e.values.size() || a.from_scratch != e.from_scratch)
            throw ArchiveMismatchError("archive group '" + a.name +
                                       "' does not match config model (expected '" + e.name + "')");
    }
}

int cmd_pretrain(const CommonOpts& opts) {
    const ResolvedConfig config = load_resolved(opts);
    const auto out_dir = prepare_out_dir(opts, config);
    ModelParameters model = run_pretrain(config.experiment);
    save_model(model, out_dir / "pretrained.ckpt");
    write_text(out_dir / "pretrain.manifest.ini", render_manifest(config));
    std::cout << "pretrained " << model.total_size() << " parameters for "
              << config.experiment.pretrain_steps << " steps -> "
              << (out_dir / "pretrained.ckpt").string() << "\n";
    return kExitOk;
}

int cmd_finetune(const CommonOpts& opts, const std::string& archive_path) {
    const ResolvedConfig config = load_resolved(opts);
    const auto out_dir = prepare_out_dir(opts, config);
    ModelParameters model = load_model(archive_path);
    check_archive_matches(model, config.experiment.model);

    FinetuneResult result = run_finetune(std::move(model), config.experiment);
    emit_metrics(result.module_names, result.records, out_dir / "metrics.csv");
    write_text(out_dir / "finetune.manifest.ini", render_manifest(config));
    if (result.diverged) {
        std::cerr << "error: fine-tune diverged at step " << result.diverged_step
                  << "; partial metrics saved\n";
        return kExitDiverged;
    }
    save_model(result.model, out_dir / "finetuned.ckpt");
    std::cout << "fine-tuned for " << result.steps_run << " steps"
              << (result.early_stopped ? " (early stop)" : "") << " -> "
              << (out_dir / "metrics.csv").string() << "\n";
    return kExitOk;
}

int cmd_sweep(const CommonOpts& opts, const std::string& kind) {
    const ResolvedConfig config = load_resolved(opts);
    const auto out_dir = prepare_out_dir(opts, config);
    const ExperimentConfig& base = config.experiment;

    std::vector<std::string> module_names;
    for (const auto& mod : base.model.module_layout) module_names.push_back(mod.name);

    if (kind == "scheduler") {
        std::vector<std::pair<ScheduleKind, double>> grid;
        for (const auto s : config.sweep.schedules)
            for (const double v : config.sweep.lambda_max_values) grid.emplace_back(s, v);
        if (grid.empty()) throw ConfigError("scheduler sweep grid is empty");
        const ModelParameters pretrained = run_pretrain(base);
        const auto rows = run_scheduler_sweep(base, pretrained, grid, opts.jobs);
        write_sweep_table(module_names, rows, out_dir / "sweep_scheduler.csv");
        write_text(out_dir / "sweep.manifest.ini", render_manifest(config));
        std::cout << "scheduler sweep: " << rows.size() << " runs -> "
                  << (out_dir / "sweep_scheduler.csv").string() << "\n";
        return kExitOk;
    }
    if (kind == "freeze") {
        if (config.sweep.freeze_masks.empty()) throw ConfigError("freeze sweep grid is empty");
        std::vector<std::pair<std::string, FreezeMask>> masks;
        for (const auto& expr : config.sweep.freeze_masks)
            masks.emplace_back(expr, resolve_freeze_mask(expr, base.model));
        const ModelParameters pretrained = run_pretrain(base);
        const auto rows = run_freeze_ablation(base, pretrained, masks, opts.jobs);
        write_freeze_table(module_names, rows, out_dir / "sweep_freeze.csv");
        write_text(out_dir / "sweep.manifest.ini", render_manifest(config));
        std::cout << "freeze sweep: " << rows.size() << " runs -> "
                  << (out_dir / "sweep_freeze.csv").string() << "\n";
        return kExitOk;
    }
    throw ConfigError("unknown sweep kind '" + kind + "' (expected freeze or scheduler)");
}

std::string sparkline(const std::vector<double>& series) {
    static const char* kGlyphs[8] = {"▁", "▂", "▃", "▄",
                                     "▅", "▆", "▇", "█"};
    double max = 0.0;
    for (double v : series) max = std::max(max, v);
    std::string out;
    for (double v : series) {
        int level = max > 0.0 ? static_cast<int>(v / max * 7.0 + 0.5) : 0;
        if (level < 0) level = 0;
        if (level > 7) level = 7;
        out += kGlyphs[level];
    }
    return out;
}

int cmd_report(const std::string& metrics_path, const std::string& out_dir_flag) {
    const auto [module_names, records] = parse_metrics(metrics_path);
    const std::filesystem::path out_dir =
        out_dir_flag.empty() ? std::filesystem::path(metrics_path).parent_path()
                             : std::filesystem::path(out_dir_flag);
    {
        std::error_code ec;
        std::filesystem::create_directories(out_dir.empty() ? "." : out_dir, ec);
        if (ec) throw IoError("cannot create output directory: " + ec.message());
    }

    std::ostringstream text;
    text << "final deviations at step " << records.back().step << ":\n";
    std::size_t width = 6;
    for (const auto& name : module_names) width = std::max(width, name.size());
    for (std::size_t k = 0; k < module_names.size(); ++k) {
        text << "  " << module_names[k]
             << std::string(width - module_names[k].size() + 2, ' ')
             << format_double(records.back().module_deviation[k]) << "\n";
    }
    text << "\ndeviation over steps (" << records.front().step << ".."
         << records.back().step << "):\n";
    for (std::size_t k = 0; k < module_names.size(); ++k) {
        std::vector<double> series;
        series.reserve(records.size());
        for (const auto& rec : records) series.push_back(rec.module_deviation[k]);
        text << "  " << module_names[k]
             << std::string(width - module_names[k].size() + 2, ' ')
             << sparkline(series) << "\n";
    }
    std::cout << text.str();

    for (std::size_t k = 0; k < module_names.size(); ++k) {
        std::ostringstream tsv;
        tsv << "step\tdeviation\n";
        for (const auto& rec : records)
            tsv << rec.step << '\t' << format_double(rec.module_deviation[k]) << "\n";
        write_text(out_dir / ("dev_" + module_names[k] + ".tsv"), tsv.str());
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"proximity-constrained fine-tuning experiments"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string archive_path;
    std::string sweep_kind;
    std::string metrics_path;

    const auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* c = cmd->add_option("--config", opts.config_path, "experiment config file");
        if (needs_config) c->required();
        cmd->add_option("--seed-override", opts.seed_override, "replace the [run] seed");
        cmd->add_option("--out-dir", opts.out_dir, "output directory");
        cmd->add_option("--jobs", opts.jobs, "parallel runs for sweeps")->check(CLI::PositiveNumber);
    };

    auto* pretrain = app.add_subcommand("pretrain", "train a fresh model on the pretrain task");
    add_common(pretrain, true);

    auto* finetune = app.add_subcommand("finetune", "fine-tune a pretrained archive");
    finetune->add_option("archive", archive_path, "pretrained model archive")->required();
    add_common(finetune, true);

    auto* sweep = app.add_subcommand("sweep", "run a freeze or scheduler sweep");
    sweep->add_option("kind", sweep_kind, "freeze | scheduler")->required();
    add_common(sweep, true);

    auto* report = app.add_subcommand("report", "render a metrics file");
    report->add_option("metrics", metrics_path, "metrics.csv produced by finetune")->required();
    report->add_option("--out-dir", opts.out_dir, "output directory for per-module files");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(opts);
        if (finetune->parsed()) return cmd_finetune(opts, archive_path);
        if (sweep->parsed()) return cmd_sweep(opts, sweep_kind);
        if (report->parsed()) return cmd_report(metrics_path, opts.out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const ArchiveMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArchiveMismatch;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ContractViolation& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace proxtune
