#pragma once

// Text serialization of decompositions and TRL checkpoints.
//
// Kruskal record:   "kruskal <n_factors>", a lambda line ("none" or the
//                   values), then one matrix record per factor.
// Tucker record:    "tucker <n_factors>", the core tensor record, then the
//                   factor matrix records.
// Checkpoint:       one header line
//                   "srtrl-checkpoint scheme=.. theta=.. scale_mode=.. tie_modes=.. train_lambda=.. shape=I0,..,O"
//                   followed by the weight record and the bias as an order-1
//                   tensor record.
// Matrix and tensor records use the two-line format of write_tensor.

#include <filesystem>
#include <istream>
#include <ostream>

#include "srtrl/trl.hpp"

namespace srtrl {

void write_kruskal(std::ostream& os, const KruskalXd& k);
void write_tucker(std::ostream& os, const TuckerXd& t);
void write_weight(std::ostream& os, const Weight<double>& w);
Weight<double> read_weight(std::istream& is);

void write_checkpoint(std::ostream& os, const TrlModelXd& model);
TrlModelXd read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const TrlModelXd& model);
TrlModelXd load_checkpoint(const std::filesystem::path& path);

}  // namespace srtrl
