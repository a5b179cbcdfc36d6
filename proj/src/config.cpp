#include "proxtune/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "proxtune/errors.hpp"

namespace proxtune {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Entry {
    std::string value;
    int line = 0;
    bool present = false;
};

// Raw parse result: section -> key -> entry, with fail-closed key checking
// applied before any value is interpreted.
using Sections = std::map<std::string, std::map<std::string, Entry>>;

const std::map<std::string, std::vector<std::string>>& known_keys() {
    static const std::map<std::string, std::vector<std::string>> keys = {
        {"model", {"input_dim", "output_dim", "activation", "init_seed", "modules"}},
        {"task", {"base_seed", "noise_std", "train_samples", "eval_samples"}},
        {"policy",
         {"mode", "lambda_reg", "gamma", "lambda", "lambda_max", "schedule", "alpha", "beta1",
          "beta2", "epsilon", "weight_decay"}},
        {"freeze", {"modules"}},
        {"run",
         {"pretrain_steps", "finetune_steps", "batch_size", "seed", "log_every",
          "early_stop_loss", "out_dir"}},
        {"sweep", {"schedules", "lambda_max_values", "freeze_masks"}},
    };
    return keys;
}

Sections parse_sections(const std::string& text) {
    Sections sections;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!known_keys().count(section))
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" +
                                  section + "]");
            sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& allowed = known_keys().at(section);
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key +
                              "' in section [" + section + "]");
        auto& entry = sections[section][key];
        if (entry.present)
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        entry = {value, line_no, true};
    }
    return sections;
}

const Entry* find(const Sections& sections, const std::string& section, const std::string& key) {
    const auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
}

[[noreturn]] void bad_value(const Entry& e, const std::string& what) {
    throw ConfigError("line " + std::to_string(e.line) + ": " + what + " (got '" + e.value + "')");
}

long parse_long(const Entry& e) {
    long v = 0;
    const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size())
        bad_value(e, "expected an integer");
    return v;
}

std::uint64_t parse_u64(const Entry& e) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size())
        bad_value(e, "expected a non-negative integer");
    return v;
}

double parse_real(const Entry& e) {
    double v = 0.0;
    const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size())
        bad_value(e, "expected a number");
    return v;
}

// "name:w1,w2" with optional '*' marking a from-scratch module.
ModuleLayout parse_module(const std::string& item, const Entry& e) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) bad_value(e, "module '" + item + "' needs name:widths");
    ModuleLayout mod;
    mod.name = trim(item.substr(0, colon));
    if (!mod.name.empty() && mod.name.back() == '*') {
        mod.from_scratch = true;
        mod.name.pop_back();
        mod.name = trim(mod.name);
    }
    if (mod.name.empty()) bad_value(e, "module with empty name");
    for (const auto& w : split_list(item.substr(colon + 1), ',')) {
        int width = 0;
        const auto res = std::from_chars(w.data(), w.data() + w.size(), width);
        if (res.ec != std::errc() || res.ptr != w.data() + w.size() || width <= 0)
            bad_value(e, "bad layer width '" + w + "' in module '" + mod.name + "'");
        mod.widths.push_back(width);
    }
    if (mod.widths.empty()) bad_value(e, "module '" + mod.name + "' has no widths");
    return mod;
}

}  // namespace

FreezeMask resolve_freeze_mask(const std::string& expr, const ModelSpec& spec) {
    FreezeMask mask;
    const std::string cleaned = trim(expr);
    if (cleaned.empty() || cleaned == "none") return mask;
    if (cleaned == "all") {
        for (std::size_t k = 1; k <= spec.module_layout.size(); ++k)
            mask.frozen_modules.insert(static_cast<int>(k));
        return mask;
    }
    // Accept '+' or ',' joined module names.
    std::string normalized = cleaned;
    for (auto& c : normalized)
        if (c == ',') c = '+';
    for (const auto& name : split_list(normalized, '+')) {
        bool found = false;
        for (std::size_t k = 0; k < spec.module_layout.size(); ++k) {
            if (spec.module_layout[k].name == name) {
                mask.frozen_modules.insert(static_cast<int>(k) + 1);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("freeze mask names unknown module '" + name + "'");
    }
    return mask;
}

ResolvedConfig parse_config_text(const std::string& text,
                                 const std::filesystem::path& base_dir) {
    const Sections sections = parse_sections(text);
    ResolvedConfig config;
    ExperimentConfig& exp = config.experiment;

    // [model]
    int input_dim = 4, output_dim = 4;
    if (const auto* e = find(sections, "model", "input_dim")) {
        input_dim = static_cast<int>(parse_long(*e));
        if (input_dim <= 0) bad_value(*e, "input_dim must be positive");
    }
    if (const auto* e = find(sections, "model", "output_dim")) {
        output_dim = static_cast<int>(parse_long(*e));
        if (output_dim <= 0) bad_value(*e, "output_dim must be positive");
    }
    std::uint64_t init_seed = 0;
    if (const auto* e = find(sections, "model", "init_seed")) init_seed = parse_u64(*e);
    exp.model = default_model_spec(init_seed, input_dim, output_dim);
    if (const auto* e = find(sections, "model", "activation"))
        exp.model.activation = activation_from_string(e->value);
    if (const auto* e = find(sections, "model", "modules")) {
        if (e->value != "default") {
            exp.model.module_layout.clear();
            for (const auto& item : split_list(e->value, ';'))
                exp.model.module_layout.push_back(parse_module(item, *e));
        }
    }

    // [task]
    if (const auto* e = find(sections, "task", "base_seed")) exp.task_seed = parse_u64(*e);
    if (const auto* e = find(sections, "task", "noise_std")) {
        exp.task_noise_std = parse_real(*e);
        if (exp.task_noise_std < 0) bad_value(*e, "noise_std must be non-negative");
    }
    if (const auto* e = find(sections, "task", "train_samples")) {
        exp.train_samples = static_cast<std::size_t>(parse_long(*e));
        if (exp.train_samples == 0) bad_value(*e, "train_samples must be positive");
    }
    if (const auto* e = find(sections, "task", "eval_samples")) {
        exp.eval_samples = static_cast<std::size_t>(parse_long(*e));
        if (exp.eval_samples == 0) bad_value(*e, "eval_samples must be positive");
    }

    // [policy]
    ProximityPolicy& policy = exp.policy;
    if (const auto* e = find(sections, "policy", "mode"))
        policy.mode = proximity_mode_from_string(e->value);
    if (const auto* e = find(sections, "policy", "lambda_reg")) {
        policy.lambda_reg = parse_real(*e);
        if (policy.lambda_reg < 0) bad_value(*e, "lambda_reg must be non-negative");
    }
    if (const auto* e = find(sections, "policy", "gamma")) {
        policy.gamma = parse_real(*e);
        if (!(policy.gamma > 0)) bad_value(*e, "gamma must be positive");
    }
    if (const auto* e = find(sections, "policy", "lambda")) policy.lambda = parse_real(*e);
    if (const auto* e = find(sections, "policy", "lambda_max")) {
        policy.lambda_max = parse_real(*e);
        if (policy.lambda_max < 0) bad_value(*e, "lambda_max must be non-negative");
    }
    if (const auto* e = find(sections, "policy", "schedule"))
        policy.schedule = schedule_kind_from_string(e->value);
    if (const auto* e = find(sections, "policy", "alpha")) {
        policy.alpha = parse_real(*e);
        if (!(policy.alpha > 0)) bad_value(*e, "alpha must be positive");
    }
    if (const auto* e = find(sections, "policy", "beta1")) {
        policy.beta1 = parse_real(*e);
        if (policy.beta1 < 0 || policy.beta1 >= 1) bad_value(*e, "beta1 must be in [0,1)");
    }
    if (const auto* e = find(sections, "policy", "beta2")) {
        policy.beta2 = parse_real(*e);
        if (policy.beta2 < 0 || policy.beta2 >= 1) bad_value(*e, "beta2 must be in [0,1)");
    }
    if (const auto* e = find(sections, "policy", "epsilon")) {
        policy.epsilon = parse_real(*e);
        if (!(policy.epsilon > 0)) bad_value(*e, "epsilon must be positive");
    }
    if (const auto* e = find(sections, "policy", "weight_decay")) {
        policy.weight_decay = parse_real(*e);
        if (policy.weight_decay < 0) bad_value(*e, "weight_decay must be non-negative");
    }

    // [run]
    if (const auto* e = find(sections, "run", "pretrain_steps")) {
        exp.pretrain_steps = parse_long(*e);
        if (exp.pretrain_steps < 0) bad_value(*e, "pretrain_steps must be non-negative");
    }
    if (const auto* e = find(sections, "run", "finetune_steps")) {
        exp.finetune_steps = parse_long(*e);
        if (exp.finetune_steps < 0) bad_value(*e, "finetune_steps must be non-negative");
    }
    if (const auto* e = find(sections, "run", "batch_size")) {
        exp.batch_size = static_cast<std::size_t>(parse_long(*e));
        if (exp.batch_size == 0) bad_value(*e, "batch_size must be positive");
    }
    if (const auto* e = find(sections, "run", "seed")) exp.seed = parse_u64(*e);
    if (const auto* e = find(sections, "run", "log_every")) {
        exp.log_every = parse_long(*e);
        if (exp.log_every < 1) bad_value(*e, "log_every must be positive");
    }
    if (const auto* e = find(sections, "run", "early_stop_loss")) {
        exp.early_stop_loss = parse_real(*e);
        if (exp.early_stop_loss < 0) bad_value(*e, "early_stop_loss must be non-negative");
    }
    if (const auto* e = find(sections, "run", "out_dir"))
        config.out_dir = base_dir / std::filesystem::path(e->value);

    if (exp.finetune_steps > 0 && exp.log_every > exp.finetune_steps) {
        const auto* e = find(sections, "run", "log_every");
        throw ConfigError("line " + std::to_string(e ? e->line : 0) +
                          ": log_every exceeds finetune_steps");
    }

    // Validate the model layout early so every command fails fast.
    build_model(exp.model);

    // [freeze]
    if (const auto* e = find(sections, "freeze", "modules"))
        exp.freeze = resolve_freeze_mask(e->value, exp.model);

    // [sweep] — defaults materialize only for absent keys; an explicitly
    // empty list stays empty and the sweep command rejects it.
    if (const auto* e = find(sections, "sweep", "schedules")) {
        for (const auto& s : split_list(e->value, ','))
            config.sweep.schedules.push_back(schedule_kind_from_string(s));
    } else {
        config.sweep.schedules = {ScheduleKind::Constant, ScheduleKind::Cosine,
                                  ScheduleKind::Linear};
    }
    if (const auto* e = find(sections, "sweep", "lambda_max_values")) {
        for (const auto& s : split_list(e->value, ',')) {
            Entry item{s, e->line, true};
            const double v = parse_real(item);
            if (v < 0) bad_value(item, "lambda_max values must be non-negative");
            config.sweep.lambda_max_values.push_back(v);
        }
    } else {
        config.sweep.lambda_max_values = {0.5, 2.0, 3.0};
    }
    if (const auto* e = find(sections, "sweep", "freeze_masks")) {
        config.sweep.freeze_masks = split_list(e->value, ';');
        for (const auto& expr : config.sweep.freeze_masks)
            resolve_freeze_mask(expr, exp.model);  // fail fast on bad names
    } else {
        // The six freeze configurations of the ablation study; resolved only
        // when a freeze sweep actually runs.
        config.sweep.freeze_masks = {"vision_early+vision_late", "lang_early+lang_late",
                                     "all", "vision_early", "vision_late", "lang_early"};
    }

    return config;
}

ResolvedConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return parse_config_text(text.str(), base);
}

namespace {

std::string render_modules(const ModelSpec& spec) {
    std::string out;
    for (std::size_t m = 0; m < spec.module_layout.size(); ++m) {
        const auto& mod = spec.module_layout[m];
        if (m) out += "; ";
        out += mod.name;
        if (mod.from_scratch) out += '*';
        out += ':';
        for (std::size_t i = 0; i < mod.widths.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(mod.widths[i]);
        }
    }
    return out;
}

std::string render_freeze(const ExperimentConfig& exp) {
    if (exp.freeze.frozen_modules.empty()) return "none";
    std::string out;
    for (int idx : exp.freeze.frozen_modules) {
        if (!out.empty()) out += ',';
        out += exp.model.module_layout[static_cast<std::size_t>(idx) - 1].name;
    }
    return out;
}

}  // namespace

std::string render_manifest(const ResolvedConfig& config) {
    const ExperimentConfig& exp = config.experiment;
    const ProximityPolicy& p = exp.policy;
    std::ostringstream out;
    out << "[model]\n"
        << "input_dim = " << exp.model.input_dim << "\n"
        << "output_dim = " << exp.model.output_dim << "\n"
        << "activation = " << to_string(exp.model.activation) << "\n"
        << "init_seed = " << exp.model.init_seed << "\n"
        << "modules = " << render_modules(exp.model) << "\n\n";
    out << "[task]\n"
        << "base_seed = " << exp.task_seed << "\n"
        << "noise_std = " << format_double(exp.task_noise_std) << "\n"
        << "train_samples = " << exp.train_samples << "\n"
        << "eval_samples = " << exp.eval_samples << "\n\n";
    out << "[policy]\n"
        << "mode = " << to_string(p.mode) << "\n"
        << "lambda_reg = " << format_double(p.lambda_reg) << "\n"
        << "gamma = " << format_double(p.gamma) << "\n"
        << "lambda = " << format_double(p.lambda) << "\n"
        << "lambda_max = " << format_double(p.lambda_max) << "\n"
        << "schedule = " << to_string(p.schedule) << "\n"
        << "alpha = " << format_double(p.alpha) << "\n"
        << "beta1 = " << format_double(p.beta1) << "\n"
        << "beta2 = " << format_double(p.beta2) << "\n"
        << "epsilon = " << format_double(p.epsilon) << "\n"
        << "weight_decay = " << format_double(p.weight_decay) << "\n\n";
    out << "[freeze]\n"
        << "modules = " << render_freeze(exp) << "\n\n";
    out << "[run]\n"
        << "pretrain_steps = " << exp.pretrain_steps << "\n"
        << "finetune_steps = " << exp.finetune_steps << "\n"
        << "batch_size = " << exp.batch_size << "\n"
        << "seed = " << exp.seed << "\n"
        << "log_every = " << exp.log_every << "\n"
        << "early_stop_loss = " << format_double(exp.early_stop_loss) << "\n\n";
    out << "[sweep]\n";
    out << "schedules = ";
    for (std::size_t i = 0; i < config.sweep.schedules.size(); ++i)
        out << (i ? "," : "") << to_string(config.sweep.schedules[i]);
    out << "\nlambda_max_values = ";
    for (std::size_t i = 0; i < config.sweep.lambda_max_values.size(); ++i)
        out << (i ? "," : "") << format_double(config.sweep.lambda_max_values[i]);
    out << "\nfreeze_masks = ";
    for (std::size_t i = 0; i < config.sweep.freeze_masks.size(); ++i)
        out << (i ? "; " : "") << config.sweep.freeze_masks[i];
    out << "\n";
    return out.str();
}

}  // namespace proxtune
