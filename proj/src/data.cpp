#include "corrsem/data.hpp"

#include "corrsem/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace corrsem {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& column) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (cell.empty() || end != begin + cell.size() || errno == ERANGE || !std::isfinite(v))
        throw DataError("line " + std::to_string(line_no) + ": non-numeric value '" + cell + "' in column '" +
                        column + "'");
    return v;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const ModelSpec& spec) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_row(line);
            break;
        }
    }
    if (header.size() < 2 || header[0] != "sample_id" || header[1] != "individual_id")
        throw DataError("header must start with 'sample_id,individual_id'");

    std::map<std::string, std::size_t> column;
    for (std::size_t k = 2; k < header.size(); ++k) {
        if (header[k].empty()) throw DataError("empty variable name in header column " + std::to_string(k + 1));
        if (!column.emplace(header[k], k).second) throw DataError("duplicate header column '" + header[k] + "'");
    }
    // per sample: header column of each declared variable
    std::vector<std::vector<std::size_t>> cols(spec.sample_count());
    std::vector<std::vector<bool>> owned(spec.sample_count(), std::vector<bool>(header.size(), false));
    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        for (const auto& v : spec.sample(i).variables) {
            auto it = column.find(v);
            if (it == column.end())
                throw DataError("variable '" + v + "' of sample '" + spec.sample(i).id + "' missing from header");
            cols[i].push_back(it->second);
            owned[i][it->second] = true;
        }
    }

    std::vector<std::vector<std::vector<double>>> values(spec.sample_count());
    Dataset data;
    data.samples.resize(spec.sample_count());
    std::vector<std::set<std::string>> seen(spec.sample_count());
    for (std::size_t i = 0; i < spec.sample_count(); ++i) data.samples[i].id = spec.sample(i).id;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " cells, found " + std::to_string(cells.size()));
        const auto sample = spec.find_sample(cells[0]);
        if (!sample) throw DataError("line " + std::to_string(line_no) + ": unknown sample '" + cells[0] + "'");
        const std::string& ind = cells[1];
        if (ind.empty()) throw DataError("line " + std::to_string(line_no) + ": empty individual_id");
        if (!seen[*sample].insert(ind).second)
            throw DataError("line " + std::to_string(line_no) + ": duplicate individual '" + ind + "' in sample '" +
                            cells[0] + "'");
        std::vector<double> row;
        for (std::size_t c : cols[*sample]) {
            if (cells[c].empty())
                throw DataError("line " + std::to_string(line_no) + ": missing value for '" + header[c] +
                                "' (rows must be complete)");
            row.push_back(parse_number(cells[c], line_no, header[c]));
        }
        for (std::size_t c = 2; c < cells.size(); ++c)
            if (!owned[*sample][c] && !cells[c].empty())
                throw DataError("line " + std::to_string(line_no) + ": column '" + header[c] +
                                "' is not a variable of sample '" + cells[0] + "' and must be empty");
        values[*sample].push_back(std::move(row));
        data.samples[*sample].individuals.push_back(ind);
    }

    for (std::size_t i = 0; i < spec.sample_count(); ++i) {
        const Index p = spec.sample(i).p();
        auto& obs = data.samples[i].observations;
        obs.resize(static_cast<Index>(values[i].size()), p);
        for (std::size_t r = 0; r < values[i].size(); ++r)
            for (Index c = 0; c < p; ++c) obs(static_cast<Index>(r), c) = values[i][r][static_cast<std::size_t>(c)];
    }
    return data;
}

Dataset load_dataset(const std::filesystem::path& path, const ModelSpec& spec) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    return parse_dataset(in, spec);
}

void write_dataset(std::ostream& out, const Dataset& data, const ModelSpec& spec) {
    std::vector<std::string> columns;
    std::map<std::string, std::size_t> index;
    for (const auto& s : spec.samples())
        for (const auto& v : s.variables)
            if (index.emplace(v, columns.size()).second) columns.push_back(v);
    out << "sample_id,individual_id";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const auto& s = data.samples[i];
        const auto& vars = spec.sample(i).variables;
        for (Index r = 0; r < s.n(); ++r) {
            std::vector<std::string> cells(columns.size());
            for (std::size_t v = 0; v < vars.size(); ++v) {
                std::snprintf(buf, sizeof buf, "%.17g", s.observations(r, static_cast<Index>(v)));
                cells[index[vars[v]]] = buf;
            }
            out << s.id << ',' << s.individuals[static_cast<std::size_t>(r)];
            for (const auto& c : cells) out << ',' << c;
            out << '\n';
        }
    }
}

Pairing pairing_counts(const Dataset& data) {
    const std::size_t count = data.samples.size();
    Pairing pairing;
    pairing.counts = Eigen::MatrixXi::Zero(static_cast<Index>(count), static_cast<Index>(count));
    pairing.rows.assign(count, std::vector<std::vector<std::pair<Index, Index>>>(count));
    std::vector<std::unordered_map<std::string, Index>> lookup(count);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t r = 0; r < data.samples[i].individuals.size(); ++r)
            lookup[i].emplace(data.samples[i].individuals[r], static_cast<Index>(r));
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t k = 0; k < count; ++k) {
            auto& pairs = pairing.rows[i][k];
            const auto& ids = data.samples[i].individuals;
            for (std::size_t r = 0; r < ids.size(); ++r) {
                auto it = lookup[k].find(ids[r]);
                if (it != lookup[k].end()) pairs.emplace_back(static_cast<Index>(r), it->second);
            }
            pairing.counts(static_cast<Index>(i), static_cast<Index>(k)) = static_cast<int>(pairs.size());
        }
    return pairing;
}

SampleStats compute_stats(const Dataset& data) {
    SampleStats st;
    for (const auto& s : data.samples) {
        if (s.n() < 2)
            throw DataError("sample '" + s.id + "' has " + std::to_string(s.n()) + " observations; at least 2 required");
        st.n.push_back(s.n());
        st.n_total += s.n();
    }
    Index c_len = 0;
    for (const auto& s : data.samples) c_len += s.observations.cols() + vech_size(s.observations.cols());
    st.c.resize(c_len);
    Index off = 0;
    for (const auto& s : data.samples) {
        const Index n = s.n();
        const Index p = s.observations.cols();
        // pass 1: mean; pass 2: centred cross products
        VectorXd mean = VectorXd::Zero(p);
        for (Index r = 0; r < n; ++r) mean += s.observations.row(r).transpose();
        mean /= static_cast<double>(n);
        MatrixXd cov = MatrixXd::Zero(p, p);
        for (Index r = 0; r < n; ++r) {
            const VectorXd dev = s.observations.row(r).transpose() - mean;
            cov.noalias() += dev * dev.transpose();
        }
        cov /= static_cast<double>(n - 1);
        cov = 0.5 * (cov + cov.transpose());
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
        const auto& ev = eig.eigenvalues();
        const bool pd = ev.minCoeff() > 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        if (!pd) st.warnings.push_back("sample '" + s.id + "': sample covariance matrix is singular or not positive definite");
        st.c.segment(off, p) = mean;
        st.c.segment(off + p, vech_size(p)) = vech(cov);
        off += p + vech_size(p);
        st.mean.push_back(std::move(mean));
        st.cov.push_back(std::move(cov));
        st.cov_positive_definite.push_back(pd);
    }
    for (Index n : st.n) st.ratio.push_back(static_cast<double>(n) / static_cast<double>(st.n_total));
    st.pairing = pairing_counts(data);
    return st;
}

}  // namespace corrsem
