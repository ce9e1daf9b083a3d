#include "dolfin/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dolfin/rng.hpp"

namespace dolfin {

std::vector<int> Dataset::indices_of(Split split) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (splits[static_cast<std::size_t>(i)] == split) out.push_back(i);
    return out;
}

std::vector<int> Dataset::indices_of(Split split, int cls) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (splits[static_cast<std::size_t>(i)] == split && labels[static_cast<std::size_t>(i)] == cls)
            out.push_back(i);
    return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.num_classes < 1 || cfg.samples_per_class < 2 || cfg.input_dim < 1) {
        throw ConfigError("generate_synthetic: invalid dimensions");
    }
    if (cfg.cluster_spread <= 0.0) throw ConfigError("generate_synthetic: sigma must be > 0");
    SplitMix64 rng(derive_seed(cfg.seed, 0xDA7A));
    const int n = cfg.num_classes * cfg.samples_per_class;
    Dataset ds;
    ds.samples = DenseMatrix(n, cfg.input_dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.splits.resize(static_cast<std::size_t>(n));
    ds.num_classes = cfg.num_classes;
    ds.provenance = Provenance::Synthetic;
    const int train_per_class = (cfg.samples_per_class * 4) / 5;
    int row = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
        // Class mean on the sphere of radius cluster_separation.
        std::vector<double> mean(static_cast<std::size_t>(cfg.input_dim));
        double norm = 0.0;
        for (double& v : mean) {
            v = rng.gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : mean) v *= cfg.cluster_separation / norm;
        for (int k = 0; k < cfg.samples_per_class; ++k, ++row) {
            for (int j = 0; j < cfg.input_dim; ++j)
                ds.samples(row, j) = mean[static_cast<std::size_t>(j)] +
                                     cfg.cluster_spread * rng.gaussian();
            ds.labels[static_cast<std::size_t>(row)] = c;
            ds.splits[static_cast<std::size_t>(row)] =
                k < train_per_class ? Split::Train : Split::Test;
        }
    }
    return ds;
}

namespace {

std::uint32_t read_be32(std::istream& in, long long& offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("idx: truncated header", offset);
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

Dataset ingest_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw ParseError("idx: cannot open " + images_path);
    long long off = 0;
    if (read_be32(img, off) != 0x00000803u) {
        throw ParseError("idx: bad image magic in " + images_path, 0);
    }
    std::uint32_t n = read_be32(img, off);
    std::uint32_t rows = read_be32(img, off);
    std::uint32_t cols = read_be32(img, off);
    const int dim = static_cast<int>(rows * cols);
    Dataset ds;
    ds.samples = DenseMatrix(static_cast<int>(n), dim);
    std::vector<unsigned char> buf(static_cast<std::size_t>(dim));
    for (std::uint32_t i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), dim);
        if (!img) throw ParseError("idx: truncated image data", off);
        off += dim;
        for (int j = 0; j < dim; ++j)
            ds.samples(static_cast<int>(i), j) = buf[static_cast<std::size_t>(j)] / 255.0;
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw ParseError("idx: cannot open labels file " + labels_path);
    long long loff = 0;
    if (read_be32(lab, loff) != 0x00000801u) {
        throw ParseError("idx: bad label magic in " + labels_path, 0);
    }
    std::uint32_t ln = read_be32(lab, loff);
    if (ln != n) {
        throw ParseError("idx: label count " + std::to_string(ln) + " vs image count " +
                             std::to_string(n),
                         loff);
    }
    ds.labels.resize(static_cast<std::size_t>(n));
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        int c = lab.get();
        if (c == EOF) throw ParseError("idx: truncated labels", loff);
        ++loff;
        ds.labels[static_cast<std::size_t>(i)] = c;
        max_label = std::max(max_label, c);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Dataset ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv: empty file", 1);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    int label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == "label") label_col = static_cast<int>(i);
    if (label_col < 0) throw ParseError("csv: missing 'label' column in header", 1);
    const int dim = static_cast<int>(header.size()) - 1;
    if (dim < 1) throw ParseError("csv: no pixel columns", 1);

    std::vector<double> values;
    std::vector<int> labels;
    long long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            double v;
            try {
                v = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError("csv: non-numeric cell at line " + std::to_string(line_no),
                                 line_no);
            }
            if (col == label_col) {
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(v / 255.0);
            }
            ++col;
        }
        if (col != static_cast<int>(header.size())) {
            throw ParseError("csv: wrong column count at line " + std::to_string(line_no),
                             line_no);
        }
    }
    if (labels.empty()) throw ParseError("csv: no data rows", line_no);
    Dataset ds;
    ds.samples = DenseMatrix(static_cast<int>(labels.size()), dim, std::move(values));
    ds.labels = std::move(labels);
    ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    return ds;
}

}  // namespace

Dataset ingest_raster(const std::string& path, RasterFormat format,
                      const std::string& labels_path) {
    Dataset ds = format == RasterFormat::IDX
                     ? ingest_idx(path, labels_path.empty() ? path + ".labels" : labels_path)
                     : ingest_csv(path);
    ds.provenance = Provenance::Ingested;
    // 80/20 split per class, in file order.
    ds.splits.assign(static_cast<std::size_t>(ds.size()), Split::Train);
    std::vector<int> seen(static_cast<std::size_t>(ds.num_classes), 0);
    std::vector<int> totals(static_cast<std::size_t>(ds.num_classes), 0);
    for (int lab : ds.labels) ++totals[static_cast<std::size_t>(lab)];
    for (int i = 0; i < ds.size(); ++i) {
        int c = ds.labels[static_cast<std::size_t>(i)];
        int train_count = std::max(1, (totals[static_cast<std::size_t>(c)] * 4) / 5);
        if (totals[static_cast<std::size_t>(c)] > 1 &&
            seen[static_cast<std::size_t>(c)] >= train_count) {
            ds.splits[static_cast<std::size_t>(i)] = Split::Test;
        }
        ++seen[static_cast<std::size_t>(c)];
    }
    return ds;
}

int TaskSchedule::task_of_class(int cls) const {
    for (int t = 0; t < num_tasks(); ++t) {
        for (int c : tasks[static_cast<std::size_t>(t)])
            if (c == cls) return t;
    }
    throw DataError("task_of_class: class " + std::to_string(cls) + " not scheduled");
}

int TaskSchedule::head_row_of_class(int cls) const {
    int row = 0;
    for (const auto& task : tasks) {
        for (int c : task) {
            if (c == cls) return row;
            ++row;
        }
    }
    throw DataError("head_row_of_class: class " + std::to_string(cls) + " not scheduled");
}

int TaskSchedule::class_of_head_row(int row) const {
    int r = 0;
    for (const auto& task : tasks) {
        for (int c : task) {
            if (r == row) return c;
            ++r;
        }
    }
    throw DataError("class_of_head_row: row " + std::to_string(row) + " out of range");
}

int TaskSchedule::classes_per_task() const {
    return tasks.empty() ? 0 : static_cast<int>(tasks.front().size());
}

TaskSchedule build_schedule(const Dataset& dataset, int num_tasks, std::uint64_t seed) {
    if (num_tasks < 1) throw ConfigError("build_schedule: need at least one task");
    if (dataset.num_classes % num_tasks != 0) {
        throw ConfigError("build_schedule: " + std::to_string(dataset.num_classes) +
                          " classes not divisible by " + std::to_string(num_tasks) + " tasks");
    }
    std::vector<int> classes(static_cast<std::size_t>(dataset.num_classes));
    std::iota(classes.begin(), classes.end(), 0);
    SplitMix64 rng(derive_seed(seed, 0x5C4E));
    rng.shuffle(classes);
    const int per_task = dataset.num_classes / num_tasks;
    TaskSchedule sched;
    for (int t = 0; t < num_tasks; ++t) {
        sched.tasks.emplace_back(classes.begin() + t * per_task,
                                 classes.begin() + (t + 1) * per_task);
    }
    return sched;
}

}  // namespace dolfin
