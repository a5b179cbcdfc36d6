#include "proxtune/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>

#include "proxtune/errors.hpp"
#include "proxtune/rng.hpp"

namespace proxtune {

namespace {

// Sub-stream tags fanned out from the experiment seed.
enum StreamTag : std::uint64_t {
    kTagPretrainData = 1,
    kTagPretrainBatch = 2,
    kTagFinetuneData = 3,
    kTagFinetuneBatch = 4,
    kTagFinetuneEval = 5,
    kTagRetentionEval = 6,
    kTagShiftEval = 7,
};

struct Batch {
    std::vector<double> x;
    std::vector<double> y;
};

Batch sample_batch(const Dataset& data, SplitMix64& rng, std::size_t batch_size) {
    Batch batch;
    batch.x.resize(batch_size * static_cast<std::size_t>(data.input_dim));
    batch.y.resize(batch_size * static_cast<std::size_t>(data.output_dim));
    for (std::size_t b = 0; b < batch_size; ++b) {
        const std::size_t row = rng.next_below(data.n);
        std::memcpy(batch.x.data() + b * data.input_dim,
                    data.inputs.data() + row * data.input_dim,
                    sizeof(double) * static_cast<std::size_t>(data.input_dim));
        std::memcpy(batch.y.data() + b * data.output_dim,
                    data.targets.data() + row * data.output_dim,
                    sizeof(double) * static_cast<std::size_t>(data.output_dim));
    }
    return batch;
}

double eval_loss(const ModelSpec& spec, const ModelParameters& model, const Dataset& data) {
    const auto outputs = forward(spec, model, data.inputs, data.n);
    return loss_mse(outputs, data.targets, data.n, data.output_dim).first;
}

TaskTriple triple_for(const ExperimentConfig& config) {
    return make_task_triple(config.task_seed, config.model.input_dim,
                            config.model.output_dim, config.task_noise_std);
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

ModelParameters run_pretrain(const ExperimentConfig& config) {
    ModelParameters model = build_model(config.model);
    if (config.pretrain_steps <= 0) return model;

    const TaskTriple triple = triple_for(config);
    const Dataset train = generate(triple.pretrain,
                                   derive_stream(config.seed, kTagPretrainData),
                                   config.train_samples);

    ProximityPolicy policy = config.policy;
    policy.mode = ProximityMode::None;
    AdamState state = AdamState::init(model, policy);
    SplitMix64 batch_rng(derive_stream(config.seed, kTagPretrainBatch));

    for (long step = 1; step <= config.pretrain_steps; ++step) {
        const Batch batch = sample_batch(train, batch_rng, config.batch_size);
        ForwardCache cache;
        const auto outputs = forward(config.model, model, batch.x, config.batch_size, &cache);
        const auto [loss, loss_grad] =
            loss_mse(outputs, batch.y, config.batch_size, config.model.output_dim);
        if (!std::isfinite(loss))
            throw DivergenceError("pretrain diverged at step " + std::to_string(step) +
                                  " (non-finite loss)");
        const auto grads = backward(config.model, model, cache, loss_grad);
        optimizer_step(model, grads, state, policy);
    }
    return model;
}

FinetuneResult run_finetune(ModelParameters model, const ExperimentConfig& config) {
    snapshot_pretrained(model);
    apply_freeze_mask(model, config.freeze);

    const TaskTriple triple = triple_for(config);
    const Dataset train = generate(triple.finetune,
                                   derive_stream(config.seed, kTagFinetuneData),
                                   config.train_samples);
    const Dataset eval_train = generate(triple.finetune,
                                        derive_stream(config.seed, kTagFinetuneEval),
                                        config.eval_samples);
    const Dataset eval_retention = generate(triple.retention_probe,
                                            derive_stream(config.seed, kTagRetentionEval),
                                            config.eval_samples);
    const Dataset eval_shift = generate(triple.shift_probe,
                                        derive_stream(config.seed, kTagShiftEval),
                                        config.eval_samples);

    FinetuneResult result;
    for (const auto& mod : config.model.module_layout)
        result.module_names.push_back(mod.name);

    AdamState state = AdamState::init(model, config.policy);
    SplitMix64 batch_rng(derive_stream(config.seed, kTagFinetuneBatch));

    const auto record_at = [&](long step, double projection_rate) {
        MetricsRecord rec;
        rec.step = step;
        rec.module_deviation.reserve(result.module_names.size());
        for (int k = 1; k <= model.module_count; ++k)
            rec.module_deviation.push_back(module_deviation(model, k));
        rec.projection_rate = projection_rate;
        rec.train_loss = eval_loss(config.model, model, eval_train);
        rec.retention_loss = eval_loss(config.model, model, eval_retention);
        rec.shift_loss = eval_loss(config.model, model, eval_shift);
        result.records.push_back(std::move(rec));
    };

    record_at(0, 0.0);

    for (long step = 1; step <= config.finetune_steps; ++step) {
        const Batch batch = sample_batch(train, batch_rng, config.batch_size);
        ForwardCache cache;
        const auto outputs = forward(config.model, model, batch.x, config.batch_size, &cache);
        const auto [loss, loss_grad] =
            loss_mse(outputs, batch.y, config.batch_size, config.model.output_dim);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            result.diverged_step = step;
            result.steps_run = step - 1;
            break;
        }
        const auto grads = backward(config.model, model, cache, loss_grad);
        const StepReport report = optimizer_step(model, grads, state, config.policy);
        result.steps_run = step;

        if (step % config.log_every == 0 || step == config.finetune_steps) {
            record_at(step, report.projection_rate());
            if (config.early_stop_loss > 0.0 &&
                result.records.back().train_loss <= config.early_stop_loss) {
                result.early_stopped = true;
                break;
            }
        }
    }

    result.model = std::move(model);
    return result;
}

namespace {

// Runs `count` independent jobs with at most `jobs` worker threads; results
// land in caller-provided slots, so output order is fixed.
void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& work) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    const auto guarded = [&](std::size_t i) {
        try {
            work(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    std::size_t next = 0;
    while (next < count) {
        const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(jobs), count - next);
        std::vector<std::thread> threads;
        threads.reserve(batch);
        for (std::size_t j = 0; j < batch; ++j) threads.emplace_back(guarded, next + j);
        for (auto& t : threads) t.join();
        next += batch;
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<FreezeRow> run_freeze_ablation(const ExperimentConfig& base,
                                           const ModelParameters& pretrained,
                                           const std::vector<std::pair<std::string, FreezeMask>>& masks,
                                           int jobs) {
    std::vector<FreezeRow> rows(masks.size());
    run_parallel(masks.size(), jobs, [&](std::size_t i) {
        ExperimentConfig config = base;
        config.freeze = masks[i].second;
        FinetuneResult res = run_finetune(pretrained, config);
        if (res.diverged)
            throw DivergenceError("freeze run '" + masks[i].first + "' diverged at step " +
                                  std::to_string(res.diverged_step));
        rows[i].mask_name = masks[i].first;
        rows[i].mask = masks[i].second;
        rows[i].final_record = res.records.back();
    });
    return rows;
}

std::vector<SweepRow> run_scheduler_sweep(const ExperimentConfig& base,
                                          const ModelParameters& pretrained,
                                          const std::vector<std::pair<ScheduleKind, double>>& grid,
                                          int jobs) {
    std::vector<SweepRow> rows(grid.size());
    run_parallel(grid.size(), jobs, [&](std::size_t i) {
        ExperimentConfig config = base;
        config.policy.mode = ProximityMode::MAPS;
        config.policy.schedule = grid[i].first;
        config.policy.lambda_max = grid[i].second;
        FinetuneResult res = run_finetune(pretrained, config);
        if (res.diverged)
            throw DivergenceError("sweep run diverged at step " + std::to_string(res.diverged_step));
        SweepRow row;
        row.schedule = grid[i].first;
        row.lambda_max = grid[i].second;
        row.final_record = res.records.back();
        double ss_pre = 0.0, ss_all = 0.0;
        for (std::size_t k = 0; k < base.model.module_layout.size(); ++k) {
            const double d = row.final_record.module_deviation[k];
            ss_all += d * d;
            if (!base.model.module_layout[k].from_scratch) ss_pre += d * d;
        }
        row.total_deviation_pretrained = std::sqrt(ss_pre);
        row.total_deviation_all = std::sqrt(ss_all);
        rows[i] = std::move(row);
    });
    return rows;
}

std::vector<std::pair<std::string, FreezeMask>> paper_freeze_masks() {
    // Module indices follow the default layout: 1 vision_early, 2 vision_late,
    // 3 bridge, 4 lang_early, 5 lang_late, 6 head.
    return {
        {"freeze_vision", FreezeMask{{1, 2}}},
        {"freeze_language", FreezeMask{{4, 5}}},
        {"freeze_all", FreezeMask{{1, 2, 3, 4, 5, 6}}},
        {"freeze_vision_early", FreezeMask{{1}}},
        {"freeze_vision_late", FreezeMask{{2}}},
        {"freeze_lang_early", FreezeMask{{4}}},
    };
}

void emit_metrics(const std::vector<std::string>& module_names,
                  const std::vector<MetricsRecord>& records,
                  const std::filesystem::path& path) {
    if (records.empty()) throw ContractViolation("emit_metrics: no records");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "step";
    for (const auto& name : module_names) out << ",dev_" << name;
    out << ",projection_rate,train_loss,retention_loss,shift_loss\n";
    for (const auto& rec : records) {
        if (rec.module_deviation.size() != module_names.size())
            throw ContractViolation("emit_metrics: record module count mismatch");
        out << rec.step;
        for (double d : rec.module_deviation) out << ',' << format_double(d);
        out << ',' << format_double(rec.projection_rate)
            << ',' << format_double(rec.train_loss)
            << ',' << format_double(rec.retention_loss)
            << ',' << format_double(rec.shift_loss) << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(line.substr(start));
            break;
        }
        parts.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

double parse_double(const std::string& s, int line_no) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError("metrics parse error at line " + std::to_string(line_no) +
                          ": bad number '" + s + "'");
    return v;
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<MetricsRecord>>
parse_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("metrics parse error at line 1: empty file");
    auto header = split(line, ',');
    if (header.size() < 5 || header.front() != "step" ||
        header[header.size() - 4] != "projection_rate" ||
        header[header.size() - 3] != "train_loss" ||
        header[header.size() - 2] != "retention_loss" ||
        header.back() != "shift_loss")
        throw ConfigError("metrics parse error at line 1: unexpected header");
    std::vector<std::string> module_names;
    for (std::size_t i = 1; i + 4 < header.size(); ++i) {
        if (header[i].rfind("dev_", 0) != 0)
            throw ConfigError("metrics parse error at line 1: expected dev_ column, got '" +
                              header[i] + "'");
        module_names.push_back(header[i].substr(4));
    }

    std::vector<MetricsRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto parts = split(line, ',');
        if (parts.size() != header.size())
            throw ConfigError("metrics parse error at line " + std::to_string(line_no) +
                              ": expected " + std::to_string(header.size()) + " columns, got " +
                              std::to_string(parts.size()));
        MetricsRecord rec;
        rec.step = static_cast<long>(parse_double(parts[0], line_no));
        for (std::size_t i = 0; i < module_names.size(); ++i)
            rec.module_deviation.push_back(parse_double(parts[1 + i], line_no));
        const std::size_t base = 1 + module_names.size();
        rec.projection_rate = parse_double(parts[base], line_no);
        rec.train_loss = parse_double(parts[base + 1], line_no);
        rec.retention_loss = parse_double(parts[base + 2], line_no);
        rec.shift_loss = parse_double(parts[base + 3], line_no);
        records.push_back(std::move(rec));
    }
    if (records.empty())
        throw ConfigError("metrics parse error at line " + std::to_string(line_no) +
                          ": no data rows");
    return {std::move(module_names), std::move(records)};
}

void write_freeze_table(const std::vector<std::string>& module_names,
                        const std::vector<FreezeRow>& rows,
                        const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "mask,train_loss,retention_loss,shift_loss";
    for (const auto& name : module_names) out << ",dev_" << name;
    out << "\n";
    for (const auto& row : rows) {
        out << row.mask_name
            << ',' << format_double(row.final_record.train_loss)
            << ',' << format_double(row.final_record.retention_loss)
            << ',' << format_double(row.final_record.shift_loss);
        for (double d : row.final_record.module_deviation) out << ',' << format_double(d);
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_sweep_table(const std::vector<std::string>& module_names,
                       const std::vector<SweepRow>& rows,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "schedule,lambda_max,train_loss,retention_loss,shift_loss,"
           "total_dev_pretrained,total_dev_all";
    for (const auto& name : module_names) out << ",dev_" << name;
    out << "\n";
    for (const auto& row : rows) {
        out << to_string(row.schedule)
            << ',' << format_double(row.lambda_max)
            << ',' << format_double(row.final_record.train_loss)
            << ',' << format_double(row.final_record.retention_loss)
            << ',' << format_double(row.final_record.shift_loss)
            << ',' << format_double(row.total_deviation_pretrained)
            << ',' << format_double(row.total_deviation_all);
        for (double d : row.final_record.module_deviation) out << ',' << format_double(d);
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace proxtune
