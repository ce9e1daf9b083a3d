#include "dolfin/report.hpp"

#include <cstdio>
#include <map>

#include "dolfin/config.hpp"

namespace dolfin {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string render_report(const ExperimentResult& result) {
    std::string out;
    out += "# ";
    out += kVersionTag;
    out += " experiment report\n\n";
    out += "seed = " + std::to_string(result.experiment_seed) + "\n\n";

    out += "## config\n\n";
    out += serialize_config(result.config);
    out += "\n## tasks\n\n";
    for (const auto& task : result.tasks) {
        out += "task " + std::to_string(task.task) + "\n";
        out += "  round_losses =";
        for (double l : task.round_losses) out += " " + fmt(l);
        out += "\n  accuracy_row =";
        for (double a : task.accuracy_row) out += " " + fmt(a);
        out += "\n  rank_repairs = " + std::to_string(task.rank_repairs) + "\n";
    }

    out += "\n## accuracy matrix\n\n";
    out += result.accuracy.to_csv();

    out += "\nfinal_average_accuracy = " + fmt(result.final_average_accuracy) + "\n";

    long long up = 0, down = 0;
    for (const auto& e : result.comm.entries) {
        up += e.upload_params;
        down += e.download_params;
    }
    out += "\n## communication\n\n";
    out += "entries = " + std::to_string(result.comm.entries.size()) + "\n";
    out += "total_upload_params = " + std::to_string(up) + "\n";
    out += "total_download_params = " + std::to_string(down) + "\n";
    out += "total_upload_bytes = " + std::to_string(8 * up) + "\n";
    out += "total_download_bytes = " + std::to_string(8 * down) + "\n";
    return out;
}

std::string render_partition_histogram(const PartitionPlan& plan, const Dataset& dataset,
                                       const TaskSchedule& schedule) {
    std::string out;
    for (std::size_t t = 0; t < plan.assignments.size(); ++t) {
        out += "task " + std::to_string(t) + " (classes";
        for (int cls : schedule.tasks[t]) out += " " + std::to_string(cls);
        out += ")\n";
        const auto& shards = plan.assignments[t];
        for (std::size_t k = 0; k < shards.size(); ++k) {
            std::map<int, int> hist;
            for (int idx : shards[k]) ++hist[dataset.labels[static_cast<std::size_t>(idx)]];
            out += "  client " + std::to_string(k) + ": total " +
                   std::to_string(shards[k].size());
            for (const auto& [cls, count] : hist) {
                out += "  class " + std::to_string(cls) + "=" + std::to_string(count);
            }
            out += "\n";
        }
    }
    return out;
}

}  // namespace dolfin
