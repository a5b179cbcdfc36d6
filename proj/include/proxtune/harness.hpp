#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "proxtune/param_store.hpp"
#include "proxtune/proximity.hpp"
#include "proxtune/tasks.hpp"
#include "proxtune/toy_model.hpp"

namespace proxtune {

// A fully explicit experiment: model, task triple, policy, freeze mask and
// run lengths. No ambient randomness; config + seed fix every output byte.
struct ExperimentConfig {
    ModelSpec model;
    std::uint64_t task_seed = 0;
    double task_noise_std = 0.01;
    ProximityPolicy policy;
    FreezeMask freeze;
    long pretrain_steps = 3000;
    long finetune_steps = 2000;
    std::size_t batch_size = 64;
    std::size_t train_samples = 8192;
    std::size_t eval_samples = 2048;
    std::uint64_t seed = 0;
    long log_every = 100;
    // Stop fine-tuning at the first log point whose train loss falls at or
    // below this value; 0 disables (used for matched-loss comparisons).
    double early_stop_loss = 0.0;
};

// One logged row: per-module deviations (stack order), the projection rate
// of the step just executed, and losses on the fixed evaluation sets.
struct MetricsRecord {
    long step = 0;
    std::vector<double> module_deviation;
    double projection_rate = 0.0;
    double train_loss = 0.0;
    double retention_loss = 0.0;
    double shift_loss = 0.0;
};

struct FinetuneResult {
    ModelParameters model;
    std::vector<std::string> module_names;
    std::vector<MetricsRecord> records;
    long steps_run = 0;
    bool early_stopped = false;
    bool diverged = false;
    long diverged_step = 0;
};

struct FreezeRow {
    std::string mask_name;
    FreezeMask mask;
    MetricsRecord final_record;
};

struct SweepRow {
    ScheduleKind schedule = ScheduleKind::Linear;
    double lambda_max = 0.0;
    MetricsRecord final_record;
    double total_deviation_pretrained = 0.0;  // rss over non-scratch modules
    double total_deviation_all = 0.0;         // rss over every module
};

// Trains a fresh model with plain Adam on the pretrain task. The snapshot is
// NOT taken; run_finetune does that. Throws DivergenceError on non-finite loss.
ModelParameters run_pretrain(const ExperimentConfig& config);

// Snapshots, applies the freeze mask, fine-tunes under config.policy and logs
// a record at step 0 and every log_every steps (plus the final step). On
// divergence returns early with the partial records and `diverged` set.
FinetuneResult run_finetune(ModelParameters model, const ExperimentConfig& config);

// One fine-tune per mask, all starting from the same pretrained model.
std::vector<FreezeRow> run_freeze_ablation(const ExperimentConfig& base,
                                           const ModelParameters& pretrained,
                                           const std::vector<std::pair<std::string, FreezeMask>>& masks,
                                           int jobs = 1);

// One fine-tune per (schedule, lambda_max) under MAPS, shared pretrain/seed.
std::vector<SweepRow> run_scheduler_sweep(const ExperimentConfig& base,
                                          const ModelParameters& pretrained,
                                          const std::vector<std::pair<ScheduleKind, double>>& grid,
                                          int jobs = 1);

// The six freeze configurations studied on the 4-component VLA stack, mapped
// onto the default 6-module layout.
std::vector<std::pair<std::string, FreezeMask>> paper_freeze_masks();

// Metrics file: header then one comma-separated row per record, doubles
// rendered with round-trip precision. Byte-identical across reruns.
void emit_metrics(const std::vector<std::string>& module_names,
                  const std::vector<MetricsRecord>& records,
                  const std::filesystem::path& path);

std::pair<std::vector<std::string>, std::vector<MetricsRecord>>
parse_metrics(const std::filesystem::path& path);

void write_freeze_table(const std::vector<std::string>& module_names,
                        const std::vector<FreezeRow>& rows,
                        const std::filesystem::path& path);

void write_sweep_table(const std::vector<std::string>& module_names,
                       const std::vector<SweepRow>& rows,
                       const std::filesystem::path& path);

// Round-trip double formatting shared by every text emitter.
std::string format_double(double x);

}  // namespace proxtune
