#pragma once

#include "ssm/coefficient_table.hpp"

#include <vector>

namespace ssm {

/// Produces [F o W]_m, the degree-m coefficient of F(W(p)), from the lower-degree
/// coefficients already stored in the table.
class Composer {
public:
    virtual ~Composer() = default;

    // Called once per degree before compose() runs for the listed indices,
    // so implementations can batch their work.
    virtual void prepare_degree(int /*k*/, const std::vector<MultiIndex>& /*ms*/, const CoefficientTable& /*table*/) {}

    // Drops any memoized state; called before a fresh computation.
    virtual void reset() {}

    virtual CVec compose(const MultiIndex& m, const CoefficientTable& table) = 0;
};

}  // namespace ssm
