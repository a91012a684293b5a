#pragma once
#include <vector>

#include "henonlab/one_dim.hpp"

namespace henon {

// Sorted list of disjoint closed intervals.
class IntervalSet {
public:
    IntervalSet() = default;
    explicit IntervalSet(std::vector<Interval> ivs);  // normalizes (sort + merge)

    const std::vector<Interval>& intervals() const { return ivs_; }
    bool empty() const { return ivs_.empty(); }
    size_t size() const { return ivs_.size(); }
    double length() const;
    bool contains(double x) const;
    bool contains(const IntervalSet& o) const;

    IntervalSet intersect(const IntervalSet& o) const;
    IntervalSet intersect(const Interval& iv) const;
    IntervalSet unite(const IntervalSet& o) const;
    IntervalSet subtract(const IntervalSet& o) const;
    IntervalSet symdiff(const IntervalSet& o) const;
    IntervalSet shifted(double s) const;
    // complement inside [lo, hi]
    IntervalSet gaps(const Interval& hull) const;

    bool operator==(const IntervalSet& o) const;

private:
    std::vector<Interval> ivs_;
};

inline bool operator==(const Interval& u, const Interval& v) { return u.lo == v.lo && u.hi == v.hi; }

}  // namespace henon
