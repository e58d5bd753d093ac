#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsc/sim.hpp"

namespace tsc {

/// Mean (exit - enter) over every vehicle of a drained episode; nullopt when
/// the log has no vehicles. Throws UnfinishedVehicles if any did not exit.
std::optional<double> aatt(const EpisodeLog& log);

struct EvalReport {
    std::optional<double> aatt;
    std::size_t throughput = 0; // vehicles that exited
    std::size_t unfinished = 0;
    double mean_queue = 0.0; // per intersection and step
    double max_queue = 0.0;  // largest single intersection total
};

/// Summary of one episode; the AATT is left empty when vehicles remain.
EvalReport make_report(const EpisodeLog& log);

/// Mean of several drained reports (AATT, throughput, queues).
EvalReport average_reports(const std::vector<EvalReport>& reports);

/// t_transfer / t_train. Throws DivisionDomain unless t_train > 0.
double transfer_ratio(double t_transfer, double t_train);

struct ComparisonRow {
    std::string name;
    double aatt = 0.0;
    double improvement = 0.0; // percent below the baseline's AATT
};

/// Rows sorted by AATT (ties by name) with percent improvement
/// (baseline - x) / baseline * 100. Throws ConfigError if the baseline is
/// not among the reports or any report lacks an AATT.
std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, EvalReport>>& reports,
                                   const std::string& baseline);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

double median(std::vector<double> values);

} // namespace tsc
