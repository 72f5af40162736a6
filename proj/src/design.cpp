#include "mtpp/design.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "mtpp/compositional.hpp"
#include "mtpp/error.hpp"

namespace mtpp {

std::vector<std::string> CovariateTransform::output_names() const {
    switch (kind) {
        case TransformKind::Alr: {
            std::vector<std::string> out;
            for (std::size_t k = 0; k < inputs.size(); ++k)
                if (k != reference) out.push_back("log(" + inputs[k] + "/" + inputs[reference] + ")");
            return out;
        }
        case TransformKind::LogRatio:
            return {"log(" + inputs[0] + "/" + inputs[1] + ")"};
        case TransformKind::Log:
            return {"log(" + inputs[0] + ")"};
    }
    return {};
}

DesignSpec::DesignSpec(int mark_count, std::vector<CovariateTransform> transforms, std::vector<CovariateBlock> blocks,
                       bool standardize, std::vector<std::string> mark_names)
    : mark_count_(mark_count),
      transforms_(std::move(transforms)),
      blocks_(std::move(blocks)),
      standardize_(standardize),
      mark_names_(std::move(mark_names)) {
    if (mark_count_ < 1) throw Error(ErrorCode::InvalidArgument, "design needs at least one mark");
    for (const auto& t : transforms_) {
        const std::size_t need = t.kind == TransformKind::Alr ? 2 : (t.kind == TransformKind::LogRatio ? 2 : 1);
        if (t.inputs.size() < need || (t.kind != TransformKind::Alr && t.inputs.size() != need)) {
            throw Error(ErrorCode::InvalidArgument, "transform has the wrong number of inputs");
        }
        if (t.kind == TransformKind::Alr && t.reference >= t.inputs.size()) {
            throw Error(ErrorCode::InvalidArgument, "alr reference out of range");
        }
    }
    if (mark_names_.empty()) {
        for (int i = 1; i <= mark_count_; ++i) mark_names_.push_back(std::to_string(i));
    }
    if (static_cast<int>(mark_names_.size()) != mark_count_) {
        throw Error(ErrorCode::InvalidArgument, "mark name count does not match mark count");
    }

    covariates_.assign(mark_count_, {});
    // Position of each covariate within its mark, to build groups afterwards.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> block_slots(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& block = blocks_[b];
        if (block.mark && (*block.mark < 1 || *block.mark > mark_count_)) {
            throw Error(ErrorCode::InvalidArgument, "block '" + block.name + "' refers to an unknown mark");
        }
        if (block.covariates.empty()) throw Error(ErrorCode::InvalidArgument, "block '" + block.name + "' is empty");
        for (int i = 1; i <= mark_count_; ++i) {
            if (block.mark && *block.mark != i) continue;
            for (const auto& c : block.covariates) {
                auto& list = covariates_[i - 1];
                if (std::find(list.begin(), list.end(), c) != list.end()) {
                    throw Error(ErrorCode::InvalidArgument,
                                "covariate '" + c + "' declared twice for mark " + std::to_string(i));
                }
                block_slots[b].emplace_back(static_cast<std::size_t>(i), list.size());
                list.push_back(c);
            }
        }
    }

    std::size_t offset = 0;
    for (int i = 1; i <= mark_count_; ++i) {
        offsets_.push_back(offset);
        names_.push_back("(Intercept)");
        mark_of_.push_back(i);
        penalized_.push_back(false);
        group_of_.push_back(std::nullopt);
        for (const auto& c : covariates_[i - 1]) {
            names_.push_back(c);
            mark_of_.push_back(i);
            penalized_.push_back(false);
            group_of_.push_back(std::nullopt);
        }
        offset += covariates_[i - 1].size() + 1;
    }

    // Groups are numbered block by block, marks ascending within a block.
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (!blocks_[b].penalized) continue;
        for (int i = 1; i <= mark_count_; ++i) {
            CoefficientGroup g{blocks_[b].name, i, {}};
            for (const auto& [mark, pos] : block_slots[b]) {
                if (static_cast<int>(mark) != i) continue;
                const std::size_t l = offsets_[i - 1] + 1 + pos;
                g.indices.push_back(l);
                penalized_[l] = true;
                group_of_[l] = groups_.size();
            }
            if (!g.indices.empty()) groups_.push_back(std::move(g));
        }
    }
}

std::optional<std::size_t> DesignSpec::group_of(std::size_t l) const { return group_of_[l]; }

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find(sep, start);
        const auto item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!item.empty()) out.push_back(item);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_ws(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
    throw Error(ErrorCode::ParseError, "design spec line " + std::to_string(line) + ": " + msg);
}

/// Parses "keyword[mark] name:" prefixes; returns (mark, name, rest).
std::tuple<std::optional<int>, std::string, std::string> parse_block_head(const std::string& head_and_rest,
                                                                          std::size_t keyword_len, std::size_t line) {
    const auto colon = head_and_rest.find(':');
    if (colon == std::string::npos) parse_fail(line, "expected ':' before the covariate list");
    std::string head = head_and_rest.substr(keyword_len, colon - keyword_len);
    std::optional<int> mark;
    head = trim(head);
    if (!head.empty() && head.front() == '[') {
        const auto close = head.find(']');
        if (close == std::string::npos) parse_fail(line, "unterminated mark selector");
        try {
            mark = std::stoi(head.substr(1, close - 1));
        } catch (const std::exception&) {
            parse_fail(line, "bad mark selector");
        }
        head = trim(head.substr(close + 1));
    }
    return {mark, head, head_and_rest.substr(colon + 1)};
}

}  // namespace

DesignSpec DesignSpec::parse(std::string_view text) {
    int marks = 0;
    std::map<int, std::string> names;
    std::vector<CovariateTransform> transforms;
    std::vector<CovariateBlock> blocks;
    bool standardize = false;

    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    std::size_t unnamed = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto words = split_ws(line);
        const std::string& key = words[0];

        if (key == "marks") {
            if (words.size() != 2) parse_fail(line_no, "usage: marks <count>");
            try {
                marks = std::stoi(words[1]);
            } catch (const std::exception&) {
                parse_fail(line_no, "bad mark count");
            }
        } else if (key == "mark") {
            if (words.size() < 3) parse_fail(line_no, "usage: mark <index> <name>");
            names[std::stoi(words[1])] = words[2];
        } else if (key == "alr") {
            CovariateTransform t{TransformKind::Alr, {}, 0};
            std::optional<std::string> ref;
            for (std::size_t w = 1; w < words.size(); ++w) {
                if (words[w].rfind("ref=", 0) == 0)
                    ref = words[w].substr(4);
                else
                    t.inputs.push_back(words[w]);
            }
            if (t.inputs.size() < 2) parse_fail(line_no, "alr needs at least two inputs");
            t.reference = t.inputs.size() - 1;
            if (ref) {
                auto it = std::find(t.inputs.begin(), t.inputs.end(), *ref);
                if (it == t.inputs.end()) parse_fail(line_no, "alr reference '" + *ref + "' is not an input");
                t.reference = static_cast<std::size_t>(it - t.inputs.begin());
            }
            transforms.push_back(std::move(t));
        } else if (key == "logratio") {
            if (words.size() != 3) parse_fail(line_no, "usage: logratio <numerator> <denominator>");
            transforms.push_back({TransformKind::LogRatio, {words[1], words[2]}, 0});
        } else if (key == "log") {
            if (words.size() != 2) parse_fail(line_no, "usage: log <covariate>");
            transforms.push_back({TransformKind::Log, {words[1]}, 0});
        } else if (key == "standardize") {
            standardize = true;
        } else if (key.rfind("group", 0) == 0) {
            auto [mark, name, rest] = parse_block_head(line, 5, line_no);
            if (name.empty()) parse_fail(line_no, "group needs a name");
            blocks.push_back({name, mark, split_list(rest, ','), true});
        } else if (key.rfind("unpenalized", 0) == 0) {
            auto [mark, name, rest] = parse_block_head(line, 11, line_no);
            blocks.push_back({name.empty() ? "unpenalized" + std::to_string(++unnamed) : name, mark,
                              split_list(rest, ','), false});
        } else {
            parse_fail(line_no, "unknown directive '" + key + "'");
        }
    }
    if (marks < 1) throw Error(ErrorCode::ParseError, "design spec: missing 'marks <count>'");
    std::vector<std::string> mark_names;
    for (int i = 1; i <= marks; ++i) mark_names.push_back(names.count(i) ? names[i] : std::to_string(i));
    try {
        return DesignSpec(marks, std::move(transforms), std::move(blocks), standardize, std::move(mark_names));
    } catch (const Error& e) {
        throw Error(ErrorCode::ParseError, std::string("design spec: ") + e.what());
    }
}

DesignSpec DesignSpec::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileError, "cannot open design spec '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

std::string DesignSpec::to_text() const {
    std::ostringstream out;
    out << "marks " << mark_count_ << '\n';
    for (int i = 1; i <= mark_count_; ++i) out << "mark " << i << ' ' << mark_names_[i - 1] << '\n';
    for (const auto& t : transforms_) {
        switch (t.kind) {
            case TransformKind::Alr:
                out << "alr";
                for (const auto& s : t.inputs) out << ' ' << s;
                out << " ref=" << t.inputs[t.reference] << '\n';
                break;
            case TransformKind::LogRatio:
                out << "logratio " << t.inputs[0] << ' ' << t.inputs[1] << '\n';
                break;
            case TransformKind::Log:
                out << "log " << t.inputs[0] << '\n';
                break;
        }
    }
    if (standardize_) out << "standardize\n";
    for (const auto& b : blocks_) {
        out << (b.penalized ? "group" : "unpenalized");
        if (b.mark) out << '[' << *b.mark << ']';
        out << ' ' << b.name << ": ";
        for (std::size_t k = 0; k < b.covariates.size(); ++k) out << (k ? ", " : "") << b.covariates[k];
        out << '\n';
    }
    return out.str();
}

RegionDesign RegionDesign::with_population_scale(double factor) const {
    RegionDesign out = *this;
    out.population *= factor;
    for (Eigen::Index j = 0; j < out.population.size(); ++j) {
        out.zero_population[j] = out.population[j] == 0.0;
        out.log_population[j] = std::log(out.population[j]);
    }
    return out;
}

RegionDesign build_design(const RegionSet& regions, const DesignSpec& spec, const DesignOptions& options) {
    const auto J = static_cast<Eigen::Index>(regions.size());
    RegionDesign d;
    d.population.resize(J);
    d.log_population.resize(J);
    d.area.resize(J);
    d.zero_population.assign(regions.size(), false);

    std::vector<std::map<std::string, double>> values(regions.size());
    for (Eigen::Index j = 0; j < J; ++j) {
        const Region& r = regions[static_cast<std::size_t>(j)];
        d.region_ids.push_back(r.id);
        d.population[j] = r.population;
        d.log_population[j] = std::log(r.population);
        d.area[j] = r.area;
        d.zero_population[j] = r.population == 0.0;

        auto& v = values[j];
        v = r.raw_covariates;
        const std::string where = "region " + std::to_string(r.id);
        auto fetch = [&](const std::string& name) {
            auto it = v.find(name);
            if (it == v.end()) throw Error(ErrorCode::MissingCovariate, where + ": no covariate '" + name + "'");
            return it->second;
        };
        for (const auto& t : spec.transforms()) {
            std::vector<double> in;
            for (const auto& name : t.inputs) in.push_back(fetch(name));
            const auto outputs = t.output_names();
            std::vector<double> result;
            try {
                if (t.kind == TransformKind::Alr) {
                    if (options.zero_replacement && std::any_of(in.begin(), in.end(), [](double x) { return x == 0.0; }))
                        in = multiplicative_replacement(in);
                    result = alr_transform(in, t.reference, options.sum_tolerance);
                } else {
                    if (options.zero_replacement && t.kind == TransformKind::LogRatio && (in[0] == 0.0 || in[1] == 0.0))
                        in = multiplicative_replacement(in);
                    for (double x : in) {
                        if (!(x > 0.0)) throw Error(ErrorCode::NonPositiveComponent, "non-positive log input");
                    }
                    result = {t.kind == TransformKind::Log ? std::log(in[0]) : std::log(in[0] / in[1])};
                }
            } catch (const Error& e) {
                throw Error(e.code(), where + ", " + outputs.front() + ": " + e.what());
            }
            for (std::size_t k = 0; k < outputs.size(); ++k) v[outputs[k]] = result[k];
        }
    }

    for (int i = 1; i <= spec.mark_count(); ++i) {
        const auto& covs = spec.covariates(i);
        Eigen::MatrixXd z(J, static_cast<Eigen::Index>(covs.size() + 1));
        z.col(0).setOnes();
        for (Eigen::Index j = 0; j < J; ++j) {
            for (std::size_t c = 0; c < covs.size(); ++c) {
                auto it = values[j].find(covs[c]);
                if (it == values[j].end()) {
                    throw Error(ErrorCode::MissingCovariate, "region " + std::to_string(d.region_ids[j]) +
                                                                 ": no covariate '" + covs[c] + "'");
                }
                if (!std::isfinite(it->second)) {
                    throw Error(ErrorCode::MissingCovariate, "region " + std::to_string(d.region_ids[j]) +
                                                                 ": covariate '" + covs[c] + "' is not finite");
                }
                z(j, static_cast<Eigen::Index>(c + 1)) = it->second;
            }
        }
        if (spec.standardize()) {
            for (Eigen::Index c = 1; c < z.cols(); ++c) {
                const double mean = z.col(c).mean();
                const double sd = std::sqrt((z.col(c).array() - mean).square().sum() / std::max<double>(1.0, J - 1));
                z.col(c).array() -= mean;
                if (sd > 0.0) z.col(c) /= sd;
            }
        }
        d.z.push_back(std::move(z));
    }
    return d;
}

}  // namespace mtpp
