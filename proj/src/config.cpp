#include "indrnn/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "indrnn/text.hpp"

namespace indrnn {

namespace {

std::string join_indices(const std::vector<Index>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<Index> split_indices(std::string_view s, std::string_view what) {
  std::vector<Index> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(parse_int(s.substr(0, comma), what));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": list must not be empty");
  return out;
}

std::uint64_t parse_seed(std::string_view s, std::string_view what) {
  const std::int64_t v = parse_int(s, what);
  if (v < 0) throw ConfigError(std::string(what) + ": must not be negative");
  return static_cast<std::uint64_t>(v);
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

void check_task(const std::string& v) {
  static const std::set<std::string> tasks = {"adding",   "pixels", "charlm", "gradcheck",
                                              "gradflow", "bench",  "equiv"};
  if (!tasks.count(v)) {
    throw ConfigError("task: unknown value \"" + v +
                      "\" (expected adding, pixels, charlm, gradcheck, gradflow, bench "
                      "or equiv)");
  }
}

void check_schedule(const std::string& v) {
  if (v != "plateau" && v != "step" && v != "none") {
    throw ConfigError("schedule: unknown value \"" + v +
                      "\" (expected plateau, step or none)");
  }
}

const std::vector<Field>& fields() {
  auto str = [](std::string RunConfig::*member, auto check) {
    return Field{nullptr,
                 [member](const RunConfig& c) { return c.*member; },
                 [member, check](RunConfig& c, std::string_view v) {
                   c.*member = std::string(trim(v));
                   check(c.*member);
                 }};
  };
  auto idx = [](Index RunConfig::*member, const char* key) {
    return Field{key, [member](const RunConfig& c) { return std::to_string(c.*member); },
                 [member, key](RunConfig& c, std::string_view v) {
                   c.*member = parse_int(v, key);
                 }};
  };
  auto dbl = [](double RunConfig::*member, const char* key) {
    return Field{key, [member](const RunConfig& c) { return format_double(c.*member); },
                 [member, key](RunConfig& c, std::string_view v) {
                   c.*member = parse_double(v, key);
                 }};
  };
  auto flag = [](bool RunConfig::*member, const char* key) {
    return Field{key,
                 [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
                 [member, key](RunConfig& c, std::string_view v) {
                   c.*member = parse_bool(v, key);
                 }};
  };
  auto list = [](std::vector<Index> RunConfig::*member, const char* key) {
    return Field{key, [member](const RunConfig& c) { return join_indices(c.*member); },
                 [member, key](RunConfig& c, std::string_view v) {
                   c.*member = split_indices(v, key);
                 }};
  };
  auto named = [](Field f, const char* key) {
    f.key = key;
    return f;
  };

  static const std::vector<Field> table = {
      named(str(&RunConfig::task, check_task), "task"),
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, std::string_view v) { c.seed = parse_seed(v, "seed"); }},
      named(str(&RunConfig::arch, [](const std::string& v) { parse_net_kind(v); }), "arch"),
      named(str(&RunConfig::cell, [](const std::string& v) { parse_cell_kind(v); }), "cell"),
      named(str(&RunConfig::activation,
                [](const std::string& v) { parse_activation(v); }),
            "activation"),
      named(str(&RunConfig::composite, [](const std::string& v) { parse_composite(v); }),
            "composite"),
      idx(&RunConfig::layers, "layers"),
      idx(&RunConfig::hidden, "hidden"),
      idx(&RunConfig::growth, "growth"),
      list(&RunConfig::blocks, "blocks"),
      flag(&RunConfig::batch_norm, "batch_norm"),
      named(str(&RunConfig::bn_policy, [](const std::string& v) { parse_bn_policy(v); }),
            "bn_policy"),
      dbl(&RunConfig::dropout_input, "dropout_input"),
      dbl(&RunConfig::dropout_layer, "dropout_layer"),
      dbl(&RunConfig::dropout_bottleneck, "dropout_bottleneck"),
      dbl(&RunConfig::dropout_dense, "dropout_dense"),
      dbl(&RunConfig::dropout_transition, "dropout_transition"),
      idx(&RunConfig::t_len, "T"),
      idx(&RunConfig::batch, "B"),
      dbl(&RunConfig::lr, "lr"),
      dbl(&RunConfig::gamma, "gamma"),
      dbl(&RunConfig::epsilon, "epsilon"),
      dbl(&RunConfig::weight_decay, "weight_decay"),
      idx(&RunConfig::steps, "steps"),
      idx(&RunConfig::epochs, "epochs"),
      idx(&RunConfig::eval_every, "eval_every"),
      named(str(&RunConfig::schedule, check_schedule), "schedule"),
      idx(&RunConfig::patience, "patience"),
      dbl(&RunConfig::lr_factor, "lr_factor"),
      idx(&RunConfig::step_every, "step_every"),
      dbl(&RunConfig::step_factor, "step_factor"),
      named(str(&RunConfig::images, [](const std::string&) {}), "images"),
      named(str(&RunConfig::labels, [](const std::string&) {}), "labels"),
      named(str(&RunConfig::test_images, [](const std::string&) {}), "test_images"),
      named(str(&RunConfig::test_labels, [](const std::string&) {}), "test_labels"),
      named(str(&RunConfig::corpus, [](const std::string&) {}), "corpus"),
      flag(&RunConfig::permute, "permute"),
      dbl(&RunConfig::val_fraction, "val_fraction"),
      named(str(&RunConfig::out_dir, [](const std::string&) {}), "out_dir"),
      flag(&RunConfig::checkpoints, "checkpoints"),
      flag(&RunConfig::plots, "plots"),
      list(&RunConfig::bench_widths, "bench_widths"),
      idx(&RunConfig::bench_reps, "bench_reps"),
      idx(&RunConfig::equiv_trials, "equiv_trials"),
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const Field* field = find_field(key);
    if (!field) throw ConfigError("unknown config key \"" + key + "\"");
    if (!seen.insert(key).second) {
      throw ConfigError("duplicate config key \"" + key + "\"");
    }
    field->set(cfg, line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    const std::string value = f.get(cfg);
    out += f.key;
    out += value.empty() ? " =" : " = " + value;
    out += '\n';
  }
  return out;
}

void validate_config(const RunConfig& cfg) {
  check_task(cfg.task);
  parse_net_kind(cfg.arch);
  parse_cell_kind(cfg.cell);
  parse_activation(cfg.activation);
  parse_composite(cfg.composite);
  parse_bn_policy(cfg.bn_policy);
  check_schedule(cfg.schedule);

  auto positive = [](Index v, const char* key) {
    if (v < 1) throw ConfigError(std::string(key) + ": must be positive");
  };
  positive(cfg.layers, "layers");
  positive(cfg.hidden, "hidden");
  positive(cfg.growth, "growth");
  positive(cfg.t_len, "T");
  positive(cfg.batch, "B");
  positive(cfg.steps, "steps");
  positive(cfg.epochs, "epochs");
  positive(cfg.eval_every, "eval_every");
  positive(cfg.patience, "patience");
  positive(cfg.step_every, "step_every");
  positive(cfg.bench_reps, "bench_reps");
  positive(cfg.equiv_trials, "equiv_trials");
  for (Index b : cfg.blocks) positive(b, "blocks");
  for (Index w : cfg.bench_widths) positive(w, "bench_widths");

  if (!(cfg.lr > 0.0)) throw ConfigError("lr: must be positive");
  if (!(cfg.gamma > 0.0)) throw ConfigError("gamma: must be positive");
  if (!(cfg.epsilon > 0.0) || !(cfg.epsilon < cfg.gamma)) {
    throw ConfigError("epsilon: must satisfy 0 < epsilon < gamma");
  }
  if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay: must not be negative");
  if (!(cfg.lr_factor > 1.0)) throw ConfigError("lr_factor: must exceed 1");
  if (!(cfg.step_factor > 0.0) || cfg.step_factor > 1.0) {
    throw ConfigError("step_factor: must lie in (0, 1]");
  }
  if (cfg.val_fraction < 0.0 || cfg.val_fraction > 0.5) {
    throw ConfigError("val_fraction: must lie in [0, 0.5]");
  }
  auto rate = [](double v, const char* key) {
    if (v < 0.0 || v >= 1.0) {
      throw ConfigError(std::string(key) + ": must lie in [0, 1)");
    }
  };
  rate(cfg.dropout_input, "dropout_input");
  rate(cfg.dropout_layer, "dropout_layer");
  rate(cfg.dropout_bottleneck, "dropout_bottleneck");
  rate(cfg.dropout_dense, "dropout_dense");
  rate(cfg.dropout_transition, "dropout_transition");
}

NetKind parse_net_kind(const std::string& s) {
  if (s == "stacked") return NetKind::Stacked;
  if (s == "residual") return NetKind::Residual;
  if (s == "dense") return NetKind::Dense;
  throw ConfigError("arch: unknown value \"" + s +
                    "\" (expected stacked, residual or dense)");
}

CellKind parse_cell_kind(const std::string& s) {
  if (s == "indrnn") return CellKind::IndRnn;
  if (s == "vanilla") return CellKind::VanillaTanh;
  throw ConfigError("cell: unknown value \"" + s + "\" (expected indrnn or vanilla)");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw ConfigError("activation: unknown value \"" + s +
                    "\" (expected relu, tanh or linear)");
}

CompositeOrder parse_composite(const std::string& s) {
  if (s == "weight_bn_rec") return CompositeOrder::WeightBnRec;
  if (s == "weight_rec_bn") return CompositeOrder::WeightRecBn;
  throw ConfigError("composite: unknown value \"" + s +
                    "\" (expected weight_bn_rec or weight_rec_bn)");
}

BnPolicy parse_bn_policy(const std::string& s) {
  if (s == "all_steps") return BnPolicy::AllSteps;
  if (s == "per_step") return BnPolicy::PerStep;
  throw ConfigError("bn_policy: unknown value \"" + s +
                    "\" (expected all_steps or per_step)");
}

}  // namespace indrnn
