#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "twotower/data.hpp"
#include "twotower/model.hpp"
#include "twotower/train.hpp"

namespace twotower::cli {

/// Every setting a subcommand can read. Echoed as run.cfg into each output
/// directory; the same file can be passed back with --config.
struct RunConfig {
    std::string command;
    std::string data_dir;
    std::string checkpoint;
    std::string out_dir;
    std::string predictions_dir;
    std::string left, right, clue;  // infer inputs
    std::string clue_mode;          // empty: gen-data blockmatch, otherwise the dataset's mode
    std::string baseline = "constant";
    ModelConfig model;
    TrainConfig train;
    std::uint64_t seed = 0;
    std::size_t count = 20;
    std::size_t size = 64;
    std::size_t seeds = 10;          // gradcheck seeds
    std::size_t ablation_seeds = 3;

    std::string to_cfg() const;
};

/// Parses `args` (without the program name) and runs the subcommand.
/// Returns the process exit code; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Subcommand bodies, callable in-process. Each validates its inputs before
// writing anything and throws on failure.
void cmd_gen_data(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_infer(const RunConfig& cfg, std::ostream& out);
bool cmd_gradcheck(const RunConfig& cfg, std::ostream& out);
void cmd_ablate(const RunConfig& cfg, std::ostream& out);

}  // namespace twotower::cli
