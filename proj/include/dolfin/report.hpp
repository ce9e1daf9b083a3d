#pragma once

#include <string>

#include "dolfin/data.hpp"
#include "dolfin/federated.hpp"

namespace dolfin {

inline constexpr const char* kVersionTag = "dolfin 1.0.0";

// Deterministic structured text report: config echo, per-task round losses
// and accuracy rows, the accuracy matrix CSV, FAA, communication totals, and
// the experiment seed. Identical runs produce byte-identical text; wall-clock
// timing is deliberately absent (it goes to the console instead).
std::string render_report(const ExperimentResult& result);

// Per-client class histograms for a partition plan, one task per block.
std::string render_partition_histogram(const PartitionPlan& plan, const Dataset& dataset,
                                       const TaskSchedule& schedule);

}  // namespace dolfin
