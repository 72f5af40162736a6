#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mtpp/regions.hpp"

namespace mtpp {

enum class TransformKind { Alr, LogRatio, Log };

/// Derived covariate(s) computed from raw region properties.
///   Alr      inputs (a, b, ..., ref) -> log(a/ref), log(b/ref), ...
///   LogRatio inputs (a, b)           -> log(a/b)
///   Log      inputs (a)              -> log(a)
struct CovariateTransform {
    TransformKind kind = TransformKind::Log;
    std::vector<std::string> inputs;
    std::size_t reference = 0;  ///< index into inputs (Alr only)

    std::vector<std::string> output_names() const;
};

/// Declaration of a set of covariates; `mark` unset means every mark.
struct CovariateBlock {
    std::string name;
    std::optional<int> mark;
    std::vector<std::string> covariates;
    bool penalized = true;  ///< false for unpenalized (ungrouped) covariates
};

struct CoefficientGroup {
    std::string name;
    int mark = 1;
    std::vector<std::size_t> indices;  ///< positions in the full coefficient vector
};

/// Coefficient layout of the multitype model: for each mark an intercept
/// followed by its covariates, marks concatenated. Intercepts are never
/// penalized and belong to no group.
class DesignSpec {
public:
    DesignSpec() = default;
    DesignSpec(int mark_count, std::vector<CovariateTransform> transforms, std::vector<CovariateBlock> blocks,
               bool standardize = false, std::vector<std::string> mark_names = {});

    static DesignSpec parse(std::string_view text);
    static DesignSpec from_file(const std::filesystem::path& path);
    std::string to_text() const;

    int mark_count() const { return mark_count_; }
    std::size_t size() const { return names_.size(); }  ///< p
    std::size_t mark_offset(int mark) const { return offsets_[mark - 1]; }
    std::size_t mark_width(int mark) const { return covariates_[mark - 1].size() + 1; }  ///< b_i
    const std::vector<std::string>& covariates(int mark) const { return covariates_[mark - 1]; }

    const std::string& coefficient_name(std::size_t l) const { return names_[l]; }
    int mark_of(std::size_t l) const { return mark_of_[l]; }
    bool is_intercept(std::size_t l) const { return l == offsets_[mark_of_[l] - 1]; }
    bool penalized(std::size_t l) const { return penalized_[l]; }
    std::optional<std::size_t> group_of(std::size_t l) const;

    const std::vector<CoefficientGroup>& groups() const { return groups_; }
    const std::vector<CovariateTransform>& transforms() const { return transforms_; }
    const std::vector<CovariateBlock>& blocks() const { return blocks_; }
    const std::vector<std::string>& mark_names() const { return mark_names_; }
    bool standardize() const { return standardize_; }

private:
    int mark_count_ = 0;
    std::vector<CovariateTransform> transforms_;
    std::vector<CovariateBlock> blocks_;
    bool standardize_ = false;
    std::vector<std::string> mark_names_;

    std::vector<std::vector<std::string>> covariates_;
    std::vector<std::size_t> offsets_;
    std::vector<std::string> names_;
    std::vector<int> mark_of_;
    std::vector<bool> penalized_;
    std::vector<std::optional<std::size_t>> group_of_;
    std::vector<CoefficientGroup> groups_;
};

struct DesignOptions {
    /// Replace zero shares in compositional inputs (multiplicative replacement)
    /// instead of failing with NonPositiveComponent.
    bool zero_replacement = false;
    double sum_tolerance = 1e-6;
};

/// Region-level design: z_{i,j} rows per mark plus offsets log ν_j.
struct RegionDesign {
    std::vector<Eigen::MatrixXd> z;  ///< per mark, J × b_i, first column all ones
    Eigen::VectorXd population;      ///< ν_j
    Eigen::VectorXd log_population;  ///< log ν_j (-inf where ν_j = 0)
    Eigen::VectorXd area;            ///< |A_j|
    std::vector<int> region_ids;
    std::vector<bool> zero_population;

    std::size_t regions() const { return static_cast<std::size_t>(population.size()); }
    int mark_count() const { return static_cast<int>(z.size()); }
    RegionDesign with_population_scale(double factor) const;
};

RegionDesign build_design(const RegionSet& regions, const DesignSpec& spec, const DesignOptions& options = {});

}  // namespace mtpp
