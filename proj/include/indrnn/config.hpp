#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "indrnn/network.hpp"
#include "indrnn/types.hpp"

namespace indrnn {

// Flat key=value run description. Parsing an emitted canonical form yields
// the same canonical form byte for byte, which is what makes manifests and
// checkpoint-embedded configs trustworthy.
struct RunConfig {
  std::string task = "adding";  // adding|pixels|charlm|gradcheck|gradflow|bench|equiv
  std::uint64_t seed = 1;

  // Model shape.
  std::string arch = "stacked";      // stacked|residual|dense
  std::string cell = "indrnn";       // indrnn|vanilla
  std::string activation = "relu";   // relu|tanh|linear
  std::string composite = "weight_bn_rec";  // weight_bn_rec|weight_rec_bn
  Index layers = 2;
  Index hidden = 128;
  Index growth = 16;                 // dense growth rate k
  std::vector<Index> blocks = {8, 6, 4};
  bool batch_norm = false;
  std::string bn_policy = "all_steps";  // all_steps|per_step

  double dropout_input = 0.0;
  double dropout_layer = 0.0;
  double dropout_bottleneck = 0.0;
  double dropout_dense = 0.0;
  double dropout_transition = 0.0;

  // Sequence geometry.
  Index t_len = 100;  // key "T"
  Index batch = 32;   // key "B"

  // Optimization.
  double lr = 2e-4;
  double gamma = 2.0;  // "inf" disables the recurrent clamp
  double epsilon = 0.5;
  double weight_decay = 0.0;
  Index steps = 30000;   // batch budget for step-driven tasks
  Index epochs = 20;     // epoch budget for dataset tasks
  Index eval_every = 200;
  std::string schedule = "plateau";  // plateau|step|none
  Index patience = 100;
  double lr_factor = 5.0;
  Index step_every = 20000;  // "step" schedule: lr *= step_factor at this cadence
  double step_factor = 0.1;

  // Data and outputs.
  std::string images;  // IDX training images (pixels task)
  std::string labels;  // IDX training labels
  std::string test_images;
  std::string test_labels;
  std::string corpus;  // byte corpus (charlm task)
  bool permute = false;
  double val_fraction = 0.05;
  std::string out_dir = "out";
  bool checkpoints = true;
  bool plots = true;

  // Bench / equivalence tasks.
  std::vector<Index> bench_widths = {64, 128, 256, 512, 1024};
  Index bench_reps = 30;
  Index equiv_trials = 50;
};

// Parses key=value lines ('#' starts a comment). Unknown keys, duplicate
// keys and malformed values throw ConfigError naming the key. Keys left out
// keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Every key in fixed order, one "key = value" line each.
std::string canonical_config(const RunConfig& cfg);

// Range/consistency checks beyond per-field syntax; throws ConfigError.
void validate_config(const RunConfig& cfg);

// Translations used by the runner; each throws ConfigError on unknown names.
NetKind parse_net_kind(const std::string& s);
CellKind parse_cell_kind(const std::string& s);
Activation parse_activation(const std::string& s);
CompositeOrder parse_composite(const std::string& s);
BnPolicy parse_bn_policy(const std::string& s);

}  // namespace indrnn
