#include "henonlab/intervals.hpp"

#include <algorithm>

namespace henon {

IntervalSet::IntervalSet(std::vector<Interval> ivs) {
    std::sort(ivs.begin(), ivs.end(), [](const Interval& u, const Interval& v) { return u.lo < v.lo; });
    for (const Interval& iv : ivs) {
        if (!(iv.hi >= iv.lo)) continue;
        if (!ivs_.empty() && iv.lo <= ivs_.back().hi)
            ivs_.back().hi = std::max(ivs_.back().hi, iv.hi);
        else
            ivs_.push_back(iv);
    }
}

double IntervalSet::length() const {
    double s = 0;
    for (const Interval& iv : ivs_) s += iv.length();
    return s;
}

bool IntervalSet::contains(double x) const {
    auto it = std::upper_bound(ivs_.begin(), ivs_.end(), x, [](double v, const Interval& iv) { return v < iv.lo; });
    return it != ivs_.begin() && std::prev(it)->contains(x);
}

bool IntervalSet::contains(const IntervalSet& o) const { return o.subtract(*this).empty(); }

IntervalSet IntervalSet::intersect(const IntervalSet& o) const {
    std::vector<Interval> out;
    size_t i = 0, j = 0;
    while (i < ivs_.size() && j < o.ivs_.size()) {
        double lo = std::max(ivs_[i].lo, o.ivs_[j].lo);
        double hi = std::min(ivs_[i].hi, o.ivs_[j].hi);
        if (lo < hi) out.push_back({lo, hi});
        if (ivs_[i].hi < o.ivs_[j].hi)
            ++i;
        else
            ++j;
    }
    IntervalSet r;
    r.ivs_ = std::move(out);
    return r;
}

IntervalSet IntervalSet::intersect(const Interval& iv) const { return intersect(IntervalSet({iv})); }

IntervalSet IntervalSet::unite(const IntervalSet& o) const {
    std::vector<Interval> all = ivs_;
    all.insert(all.end(), o.ivs_.begin(), o.ivs_.end());
    return IntervalSet(std::move(all));
}

IntervalSet IntervalSet::subtract(const IntervalSet& o) const {
    std::vector<Interval> out;
    size_t j = 0;
    for (Interval cur : ivs_) {
        while (j < o.ivs_.size() && o.ivs_[j].hi <= cur.lo) ++j;
        size_t k = j;
        while (k < o.ivs_.size() && o.ivs_[k].lo < cur.hi) {
            if (o.ivs_[k].lo > cur.lo) out.push_back({cur.lo, o.ivs_[k].lo});
            cur.lo = std::max(cur.lo, o.ivs_[k].hi);
            if (cur.lo >= cur.hi) break;
            ++k;
        }
        if (cur.lo < cur.hi) out.push_back(cur);
    }
    IntervalSet r;
    r.ivs_ = std::move(out);
    return r;
}

IntervalSet IntervalSet::symdiff(const IntervalSet& o) const { return subtract(o).unite(o.subtract(*this)); }

IntervalSet IntervalSet::shifted(double s) const {
    IntervalSet r;
    for (const Interval& iv : ivs_) r.ivs_.push_back(iv.shifted(s));
    return r;
}

IntervalSet IntervalSet::gaps(const Interval& hull) const { return IntervalSet({hull}).subtract(*this); }

bool IntervalSet::operator==(const IntervalSet& o) const { return ivs_ == o.ivs_; }

}  // namespace henon
