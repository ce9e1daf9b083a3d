#pragma once

#include <string>
#include <vector>

#include "dolfin/data.hpp"
#include "dolfin/model.hpp"

namespace dolfin {

// Lower-triangular R with R[t][i] = accuracy on task i after finishing task t.
struct AccuracyMatrix {
    std::vector<std::vector<double>> rows;

    void append_row(std::vector<double> row);
    std::string to_csv() const;
    static AccuracyMatrix from_csv(const std::string& text);
};

// Top-1 accuracy per seen task, logits over all seen classes; ties go to the
// lowest class index.
std::vector<double> evaluate(const ModelState& model, const Dataset& dataset,
                             const TaskSchedule& schedule, int tasks_done);

// Final Average Accuracy: mean of the last row.
double faa(const AccuracyMatrix& r);

struct CommEntry {
    int task = 0;
    int round = 0;
    int client = 0;
    long long upload_params = 0;
    long long download_params = 0;
    long long upload_bytes() const { return 8 * upload_params; }
    long long download_bytes() const { return 8 * download_params; }
};

struct CommLedger {
    std::vector<CommEntry> entries;
    long long total_upload_params() const;
};

struct CommConfig {
    int num_layers = 2;
    int embed_dim = 32;
    int rank = 2;
    int num_clients = 10;
    int rounds_per_task = 1;
    int num_tasks = 1;
    int classes_per_task = 1;
};

// Closed-form ledger: per client per round the B matrices and current-task
// head rows go up; A^k candidates are added at task boundaries.
CommLedger comm_cost(const CommConfig& cfg);

}  // namespace dolfin
