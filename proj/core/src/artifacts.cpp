#include "qnd/artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qnd {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::size_t> strideRows(std::size_t steps, std::size_t stride) {
    if (stride == 0) stride = 1;
    std::vector<std::size_t> rows;
    for (std::size_t k = 0; k <= steps; k += stride) rows.push_back(k);
    if (rows.back() != steps) rows.push_back(steps);
    return rows;
}

std::ofstream openOut(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    return out;
}

}  // namespace

void writeTrajectoryCsv(const std::string& path, const std::vector<double>& times,
                        const std::vector<Eigen::VectorXd>& q, const MeasurementRecord& record,
                        std::size_t stride) {
    const std::size_t p = record.y.size();
    const std::size_t m = record.jumpSteps.size();
    const auto d = static_cast<std::size_t>(q.front().size());
    auto out = openOut(path);

    out << "t";
    for (std::size_t a = 0; a < d; ++a) out << ",q_" << a;
    for (std::size_t i = 0; i < p; ++i) out << ",y_" << i;
    for (std::size_t j = 0; j < m; ++j) out << ",N_" << (p + j);
    out << "\n";

    // cumulative jump counts at each grid time
    std::vector<std::vector<std::size_t>> counts(m, std::vector<std::size_t>(record.steps + 1, 0));
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t c = 0, idx = 0;
        const auto& jumps = record.jumpSteps[j];
        for (std::size_t k = 0; k <= record.steps; ++k) {
            while (idx < jumps.size() && jumps[idx] < k) {
                ++c;
                ++idx;
            }
            counts[j][k] = c;
        }
    }

    for (std::size_t k : strideRows(record.steps, stride)) {
        out << fmt(times[k]);
        for (std::size_t a = 0; a < d; ++a) out << "," << fmt(q[k][a]);
        for (std::size_t i = 0; i < p; ++i) out << "," << fmt(record.y[i][k]);
        for (std::size_t j = 0; j < m; ++j) out << "," << counts[j][k];
        out << "\n";
    }
}

namespace {

std::vector<std::string> splitCsvLine(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parseCell(const std::string& s, std::size_t row) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw SchemaError("bad numeric cell '" + s + "' at data row " + std::to_string(row));
    return v;
}

}  // namespace

StoredTrajectory readTrajectoryCsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open trajectory file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty trajectory file");
    const auto header = splitCsvLine(line);
    if (header.empty() || header[0] != "t")
        throw SchemaError("trajectory header must start with 't'");
    std::size_t d = 0, p = 0, m = 0;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto& h = header[c];
        if (h.rfind("q_", 0) == 0)
            ++d;
        else if (h.rfind("y_", 0) == 0)
            ++p;
        else if (h.rfind("N_", 0) == 0)
            ++m;
        else
            throw SchemaError("unknown trajectory column '" + h + "'");
    }
    if (d < 2) throw SchemaError("trajectory file lacks population columns");

    StoredTrajectory traj;
    std::vector<std::vector<double>> yRows(p);
    std::vector<std::vector<std::size_t>> nRows(m);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        const auto cells = splitCsvLine(line);
        if (cells.size() != 1 + d + p + m)
            throw SchemaError("row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(1 + d + p + m));
        traj.times.push_back(parseCell(cells[0], row));
        Eigen::VectorXd q(d);
        for (std::size_t a = 0; a < d; ++a) q[a] = parseCell(cells[1 + a], row);
        traj.q.push_back(std::move(q));
        for (std::size_t i = 0; i < p; ++i) yRows[i].push_back(parseCell(cells[1 + d + i], row));
        for (std::size_t j = 0; j < m; ++j)
            nRows[j].push_back(
                static_cast<std::size_t>(std::llround(parseCell(cells[1 + d + p + j], row))));
    }
    if (traj.times.size() < 2) throw SchemaError("trajectory file needs at least two rows");

    const std::size_t steps = traj.times.size() - 1;
    traj.dt = traj.times[1] - traj.times[0];
    if (!(traj.dt > 0.0)) throw SchemaError("trajectory times must increase");
    for (std::size_t k = 0; k + 1 <= steps; ++k)
        if (std::abs(traj.times[k + 1] - traj.times[k] - traj.dt) > 1e-9 * std::max(1.0, traj.dt))
            throw SchemaError("trajectory rows are not on a uniform grid");

    traj.record.dt = traj.dt;
    traj.record.steps = steps;
    traj.record.y = std::move(yRows);
    traj.record.jumpSteps.assign(m, {});
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < steps; ++k) {
            if (nRows[j][k + 1] < nRows[j][k])
                throw SchemaError("cumulative count column decreases at row " +
                                  std::to_string(k + 1));
            for (std::size_t rep = nRows[j][k]; rep < nRows[j][k + 1]; ++rep)
                traj.record.jumpSteps[j].push_back(k);
        }
    }
    return traj;
}

void writeConditionedCsv(const std::string& path, const LogPopulations& logq,
                         std::size_t stride) {
    const auto d = static_cast<std::size_t>(logq.logq.front().size());
    auto out = openOut(path);
    out << "t";
    for (std::size_t a = 0; a < d; ++a) out << ",logq_" << a;
    out << "\n";
    for (std::size_t k : strideRows(logq.times.size() - 1, stride)) {
        out << fmt(logq.times[k]);
        for (std::size_t a = 0; a < d; ++a) out << "," << fmt(logq.logq[k][a]);
        out << "\n";
    }
}

void writeFilterCsv(const std::string& path, const FilterRun& run, std::size_t stride) {
    const auto d = static_cast<std::size_t>(run.qTilde.front().size());
    const bool hasTruth = !run.traceDistance.empty();
    auto out = openOut(path);
    out << "t";
    for (std::size_t a = 0; a < d; ++a) out << ",qtilde_" << a;
    if (hasTruth) out << ",trace_distance";
    out << "\n";
    for (std::size_t k : strideRows(run.times.size() - 1, stride)) {
        out << fmt(run.times[k]);
        for (std::size_t a = 0; a < d; ++a) out << "," << fmt(run.qTilde[k][a]);
        if (hasTruth) out << "," << fmt(run.traceDistance[k]);
        out << "\n";
    }
}

void writeTextArtifact(const std::string& path, const std::string& content) {
    auto out = openOut(path);
    out << content;
}

}  // namespace qnd
