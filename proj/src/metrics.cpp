#include "dolfin/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace dolfin {

void AccuracyMatrix::append_row(std::vector<double> row) {
    if (row.size() != rows.size() + 1) {
        throw StateError("AccuracyMatrix: row " + std::to_string(rows.size()) +
                         " must have " + std::to_string(rows.size() + 1) + " entries");
    }
    for (double v : row) {
        if (v < 0.0 || v > 1.0) throw StateError("AccuracyMatrix: entry outside [0, 1]");
    }
    rows.push_back(std::move(row));
}

std::string AccuracyMatrix::to_csv() const {
    std::string out;
    const std::size_t width = rows.size();
    char buf[64];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < width; ++i) {
            if (i) out += ',';
            if (i < row.size()) {
                std::snprintf(buf, sizeof buf, "%.17g", row[i]);
                out += buf;
            }
        }
        out += '\n';
    }
    return out;
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& text) {
    AccuracyMatrix r;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            if (cell.empty()) continue;  // cells above the diagonal
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError("accuracy csv: non-numeric cell '" + cell + "'");
            }
        }
        r.append_row(std::move(row));
    }
    return r;
}

std::vector<double> evaluate(const ModelState& model, const Dataset& dataset,
                             const TaskSchedule& schedule, int tasks_done) {
    std::vector<double> row;
    for (int t = 0; t < tasks_done; ++t) {
        std::vector<int> test_idx;
        for (int cls : schedule.tasks[static_cast<std::size_t>(t)]) {
            for (int i : dataset.indices_of(Split::Test, cls)) test_idx.push_back(i);
        }
        if (test_idx.empty()) throw DataError("evaluate: task has no test samples");
        DenseMatrix batch(static_cast<int>(test_idx.size()), dataset.input_dim());
        for (std::size_t n = 0; n < test_idx.size(); ++n)
            for (int j = 0; j < dataset.input_dim(); ++j)
                batch(static_cast<int>(n), j) = dataset.samples(test_idx[n], j);
        DenseMatrix logits = forward(model, batch);
        int hits = 0;
        for (std::size_t n = 0; n < test_idx.size(); ++n) {
            int arg = 0;
            for (int c = 1; c < logits.cols(); ++c) {
                if (logits(static_cast<int>(n), c) > logits(static_cast<int>(n), arg)) arg = c;
            }
            if (schedule.class_of_head_row(arg) ==
                dataset.labels[static_cast<std::size_t>(test_idx[n])])
                ++hits;
        }
        row.push_back(static_cast<double>(hits) / static_cast<double>(test_idx.size()));
    }
    return row;
}

double faa(const AccuracyMatrix& r) {
    if (r.rows.empty()) throw StateError("faa: empty accuracy matrix");
    const auto& last = r.rows.back();
    if (last.size() != r.rows.size()) {
        throw StateError("faa: final row incomplete (" + std::to_string(last.size()) + " of " +
                         std::to_string(r.rows.size()) + " entries)");
    }
    double sum = 0.0;
    for (double v : last) sum += v;
    return sum / static_cast<double>(last.size());
}

long long CommLedger::total_upload_params() const {
    long long total = 0;
    for (const auto& e : entries) total += e.upload_params;
    return total;
}

CommLedger comm_cost(const CommConfig& cfg) {
    if (cfg.num_layers < 1 || cfg.embed_dim < 1 || cfg.rank < 1 || cfg.num_clients < 1 ||
        cfg.rounds_per_task < 1 || cfg.num_tasks < 1 || cfg.classes_per_task < 1) {
        throw ConfigError("comm_cost: invalid config");
    }
    const long long adapter = 2LL * cfg.rank * cfg.embed_dim;  // B_K and B_V per layer
    const long long b_up = cfg.num_layers * adapter;
    const long long head_up = static_cast<long long>(cfg.classes_per_task) * cfg.embed_dim;
    const long long a_up = cfg.num_layers * adapter;  // A^k candidates, same tensor shapes
    CommLedger ledger;
    for (int t = 0; t < cfg.num_tasks; ++t) {
        for (int r = 0; r < cfg.rounds_per_task; ++r) {
            const bool boundary = (r == cfg.rounds_per_task - 1);
            for (int k = 0; k < cfg.num_clients; ++k) {
                CommEntry e;
                e.task = t;
                e.round = r;
                e.client = k;
                e.upload_params = b_up + head_up + (boundary ? a_up : 0);
                // Broadcast: A_t, B_t, and the current-task head rows.
                e.download_params = b_up + a_up + head_up;
                ledger.entries.push_back(e);
            }
        }
    }
    return ledger;
}

}  // namespace dolfin
