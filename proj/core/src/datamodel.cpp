#include "perfdro/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "perfdro/errors.hpp"

namespace perfdro {

EmpiricalDistribution::EmpiricalDistribution(std::vector<Sample> samples, Vector weights)
    : samples_(std::move(samples)), weights_(std::move(weights)) {
    if (samples_.empty()) throw EmptyDataError("EmpiricalDistribution: no atoms");
    if (static_cast<std::size_t>(weights_.size()) != samples_.size())
        throw std::invalid_argument("EmpiricalDistribution: weight/sample length mismatch");
    const Eigen::Index d = samples_.front().features.size();
    for (const Sample& s : samples_) {
        if (s.features.size() != d)
            throw std::invalid_argument("EmpiricalDistribution: inconsistent feature dimension");
        if (s.label != 0 && s.label != 1)
            throw std::invalid_argument("EmpiricalDistribution: label outside {0,1}");
    }
    if ((weights_.array() < 0.0).any())
        throw std::invalid_argument("EmpiricalDistribution: negative weight");
    const double total = pairwise_sum(weights_);
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("EmpiricalDistribution: weights sum to " +
                                    format_double(total) + ", expected 1");
}

EmpiricalDistribution EmpiricalDistribution::uniform(std::vector<Sample> samples) {
    if (samples.empty()) throw EmptyDataError("EmpiricalDistribution: no atoms");
    const std::size_t n = samples.size();
    Vector w = Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
    return EmpiricalDistribution(std::move(samples), std::move(w));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string cell = trim(raw);
    if (cell.empty())
        throw ParseError("load_csv: empty cell at data row " + std::to_string(row) +
                         ", column '" + column + "'");
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw ParseError("load_csv: non-numeric cell '" + cell + "' at data row " +
                         std::to_string(row) + ", column '" + column + "'");
    if (!std::isfinite(value))
        throw ParseError("load_csv: non-finite cell at data row " + std::to_string(row) +
                         ", column '" + column + "'");
    return value;
}

}  // namespace

EmpiricalDistribution load_csv(const std::filesystem::path& path,
                               const DatasetSchema& schema) {
    if (schema.feature_columns.empty())
        throw SchemaError("load_csv: schema has no feature columns");
    if (!schema.strategic_mask.empty() &&
        schema.strategic_mask.size() != schema.feature_columns.size())
        throw SchemaError("load_csv: strategic_mask length differs from feature count");

    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line))
        throw EmptyDataError("load_csv: " + path.string() + " is empty");
    const std::vector<std::string> header = split_csv_line(header_line);

    auto column_index = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        throw SchemaError("load_csv: column '" + name + "' not found in " + path.string());
    };

    std::vector<std::size_t> feature_idx;
    feature_idx.reserve(schema.feature_columns.size());
    for (const std::string& c : schema.feature_columns) feature_idx.push_back(column_index(c));
    const std::size_t label_idx = column_index(schema.label_column);

    std::vector<Sample> samples;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        Sample s;
        s.features.resize(static_cast<Eigen::Index>(feature_idx.size()));
        for (std::size_t j = 0; j < feature_idx.size(); ++j) {
            if (feature_idx[j] >= cells.size())
                throw ParseError("load_csv: short row " + std::to_string(row));
            s.features[static_cast<Eigen::Index>(j)] =
                parse_cell(cells[feature_idx[j]], row, schema.feature_columns[j]);
        }
        if (label_idx >= cells.size())
            throw ParseError("load_csv: short row " + std::to_string(row));
        const double y = parse_cell(cells[label_idx], row, schema.label_column);
        if (y != 0.0 && y != 1.0)
            throw ParseError("load_csv: label '" + format_double(y) + "' at data row " +
                             std::to_string(row) + " is not in {0,1}");
        s.label = static_cast<int>(y);
        samples.push_back(std::move(s));
    }
    if (samples.empty())
        throw EmptyDataError("load_csv: " + path.string() + " has a header but no data rows");
    return EmpiricalDistribution::uniform(std::move(samples));
}

EmpiricalDistribution bootstrap_resample(const EmpiricalDistribution& dist,
                                         std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("bootstrap_resample: n must be >= 1");
    Vector cumulative(dist.weights().size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < dist.weights().size(); ++i) {
        acc += dist.weights()[i];
        cumulative[i] = acc;
    }
    Rng rng(seed);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(dist.samples()[rng.categorical(cumulative)]);
    return EmpiricalDistribution::uniform(std::move(out));
}

MomentSummary moments(const EmpiricalDistribution& dist) {
    const Eigen::Index d = dist.dim();
    const Eigen::Index n = static_cast<Eigen::Index>(dist.size());
    MomentSummary m;
    m.mean = Vector::Zero(d);
    Vector col(n);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < n; ++i)
            col[i] = dist.weights()[i] * dist.samples()[static_cast<std::size_t>(i)].features[j];
        m.mean[j] = pairwise_sum(col);
    }
    m.covariance = Matrix::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index k = j; k < d; ++k) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vector& x = dist.samples()[static_cast<std::size_t>(i)].features;
                col[i] = dist.weights()[i] * (x[j] - m.mean[j]) * (x[k] - m.mean[k]);
            }
            const double c = pairwise_sum(col);
            m.covariance(j, k) = c;
            m.covariance(k, j) = c;
        }
    }
    return m;
}

}  // namespace perfdro
