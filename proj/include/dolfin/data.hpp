#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dolfin/matrix.hpp"

namespace dolfin {

enum class Provenance { Synthetic, Ingested };
enum class Split { Train, Test };
enum class RasterFormat { IDX, CSV };

struct Dataset {
    DenseMatrix samples;  // N x input_dim
    std::vector<int> labels;
    std::vector<Split> splits;
    Provenance provenance = Provenance::Synthetic;
    int num_classes = 0;

    int size() const { return samples.rows(); }
    int input_dim() const { return samples.cols(); }
    std::vector<int> indices_of(Split split) const;
    std::vector<int> indices_of(Split split, int cls) const;
};

struct SyntheticConfig {
    int num_classes = 6;
    int samples_per_class = 50;
    int input_dim = 16;
    double cluster_spread = 0.5;     // sigma
    double cluster_separation = 4.0; // sphere radius for class means
    std::uint64_t seed = 1;
};

// Gaussian clusters with means on a sphere; fixed 80/20 train/test per class.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// IDX (big-endian MNIST layout) or CSV with a "label" column; pixels are
// normalized to [0, 1]. For IDX the labels file is passed explicitly.
Dataset ingest_raster(const std::string& path, RasterFormat format,
                      const std::string& labels_path = "");

struct TaskSchedule {
    std::vector<std::vector<int>> tasks;  // disjoint class ids, equal sizes

    int num_tasks() const { return static_cast<int>(tasks.size()); }
    int task_of_class(int cls) const;

    // Head rows are laid out in schedule order, not raw class-id order.
    int head_row_of_class(int cls) const;
    int class_of_head_row(int row) const;
    int classes_per_task() const;
};

TaskSchedule build_schedule(const Dataset& dataset, int num_tasks, std::uint64_t seed);

}  // namespace dolfin
