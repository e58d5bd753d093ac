#include "tsc/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "tsc/errors.hpp"

namespace tsc {

std::optional<double> aatt(const EpisodeLog& log) {
    if (log.vehicles.empty()) return std::nullopt;
    double total = 0.0;
    std::size_t unfinished = 0;
    for (const VehicleRecord& v : log.vehicles) {
        if (!v.exit_time) {
            ++unfinished;
            continue;
        }
        total += static_cast<double>(*v.exit_time - v.enter_time);
    }
    if (unfinished > 0)
        throw UnfinishedVehicles(std::to_string(unfinished) + " vehicles never left the network");
    return total / static_cast<double>(log.vehicles.size());
}

EvalReport make_report(const EpisodeLog& log) {
    EvalReport r;
    for (const VehicleRecord& v : log.vehicles) {
        if (v.exit_time) ++r.throughput;
        else ++r.unfinished;
    }
    if (r.unfinished == 0) r.aatt = aatt(log);
    double sum = 0.0;
    std::size_t n = 0;
    for (const StepRecord& s : log.steps) {
        for (int q : s.queues) {
            sum += q;
            ++n;
            r.max_queue = std::max(r.max_queue, static_cast<double>(q));
        }
    }
    r.mean_queue = n ? sum / static_cast<double>(n) : 0.0;
    return r;
}

EvalReport average_reports(const std::vector<EvalReport>& reports) {
    EvalReport out;
    if (reports.empty()) return out;
    double aatt_sum = 0.0, through = 0.0, unfinished = 0.0;
    bool all = true;
    for (const EvalReport& r : reports) {
        if (r.aatt) aatt_sum += *r.aatt;
        else all = false;
        through += static_cast<double>(r.throughput);
        unfinished += static_cast<double>(r.unfinished);
        out.mean_queue += r.mean_queue;
        out.max_queue = std::max(out.max_queue, r.max_queue);
    }
    const double n = static_cast<double>(reports.size());
    if (all) out.aatt = aatt_sum / n;
    out.throughput = static_cast<std::size_t>(through / n + 0.5);
    out.unfinished = static_cast<std::size_t>(unfinished / n + 0.5);
    out.mean_queue /= n;
    return out;
}

double transfer_ratio(double t_transfer, double t_train) {
    if (!(t_train > 0.0)) throw DivisionDomain("transfer ratio needs a positive direct-training AATT");
    return t_transfer / t_train;
}

std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, EvalReport>>& reports,
                                   const std::string& baseline) {
    const EvalReport* base = nullptr;
    for (const auto& [name, r] : reports) {
        if (!r.aatt) throw ConfigError("report '" + name + "' has no AATT");
        if (name == baseline) base = &r;
    }
    if (!base) throw ConfigError("baseline '" + baseline + "' is not among the reports");
    std::vector<ComparisonRow> rows;
    for (const auto& [name, r] : reports)
        rows.push_back({name, *r.aatt, (*base->aatt - *r.aatt) / *base->aatt * 100.0});
    std::sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        return a.aatt != b.aatt ? a.aatt < b.aatt : a.name < b.name;
    });
    return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::string out = "method,aatt,improvement_pct\n";
    char buf[128];
    for (const ComparisonRow& r : rows) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", r.aatt, r.improvement);
        out += r.name + buf;
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DivisionDomain("median of nothing");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace tsc
