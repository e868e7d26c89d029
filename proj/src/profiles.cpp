#include "ccsoc/profiles.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "ccsoc/util.hpp"

namespace ccsoc {

namespace {

// Tolerance for sample times landing a round-off past the profile end.
constexpr double kTimeSlack = 1e-9;

double uniform_in(Philox& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.uniform01();
}

/// Walks a profile front to back, accumulating exact areas up to query
/// times that must be non-decreasing.
class ProfileWalker {
public:
    ProfileWalker(const SegmentProfile& profile, double eta_c, double eta_d, double inv_scale)
        : profile_(profile), eta_c_(eta_c), eta_d_(eta_d), inv_scale_(inv_scale) {}

    /// Area over [0, t] with per-segment efficiency weighting.
    double area_up_to(double t) {
        while (index_ < profile_.segments.size() &&
               seg_start_ + profile_.segments[index_].duration_s <= t) {
            const auto& seg = profile_.segments[index_];
            closed_.add(weight(seg.amps) * seg.amps * seg.duration_s);
            seg_start_ += seg.duration_s;
            ++index_;
        }
        double partial = 0.0;
        if (index_ < profile_.segments.size() && t > seg_start_) {
            const auto& seg = profile_.segments[index_];
            partial = weight(seg.amps) * seg.amps * (t - seg_start_);
        }
        return (closed_.value() + partial) * inv_scale_;
    }

private:
    double weight(double amps) const { return amps > 0.0 ? eta_c_ : eta_d_; }

    const SegmentProfile& profile_;
    double eta_c_;
    double eta_d_;
    double inv_scale_;
    NeumaierSum closed_;
    double seg_start_ = 0.0;
    std::size_t index_ = 0;
};

} // namespace

SegmentProfile SegmentProfile::from_segments(std::vector<Segment> segments) {
    SegmentProfile profile;
    profile.segments = std::move(segments);
    NeumaierSum total;
    for (const auto& seg : profile.segments) {
        total.add(seg.duration_s);
    }
    profile.total_duration_s = total.value();
    validate(profile);
    return profile;
}

void validate(const SegmentProfile& profile) {
    for (const auto& seg : profile.segments) {
        if (!(seg.duration_s > 0.0) || !std::isfinite(seg.duration_s)) {
            throw std::invalid_argument("segment duration must be > 0 and finite");
        }
        if (!std::isfinite(seg.amps)) {
            throw std::invalid_argument("segment amplitude must be finite");
        }
    }
    if (!std::isfinite(profile.total_duration_s) || profile.total_duration_s < 0.0) {
        throw std::invalid_argument("total duration must be finite and >= 0");
    }
}

SegmentProfile generate_profile(const ProfileSpec& spec, Philox& rng) {
    if (spec.segment_count < 1) {
        throw std::invalid_argument("segment_count must be >= 1");
    }
    if (!(spec.amp_min <= spec.amp_max) || !(spec.dur_min <= spec.dur_max) ||
        !(spec.dur_min > 0.0)) {
        throw std::invalid_argument("profile spec has an empty amplitude or duration range");
    }
    std::vector<SegmentProfile::Segment> segments;
    segments.reserve(spec.segment_count);
    for (std::size_t j = 0; j < spec.segment_count; ++j) {
        double duration = uniform_in(rng, spec.dur_min, spec.dur_max);
        if (spec.align_delta > 0.0) {
            duration = std::max(1.0, std::round(duration / spec.align_delta)) * spec.align_delta;
        }
        const double amps = uniform_in(rng, spec.amp_min, spec.amp_max);
        segments.push_back({duration, amps});
    }
    return SegmentProfile::from_segments(std::move(segments));
}

SegmentProfile generate_profile(const ProfileSpec& spec, std::uint64_t seed) {
    Philox rng(seed, mc_stream(0, RngPurpose::Profile));
    return generate_profile(spec, rng);
}

double exact_coulombs(const SegmentProfile& profile, double up_to_s) {
    if (!std::isfinite(up_to_s) || up_to_s < -kTimeSlack ||
        up_to_s > profile.total_duration_s + kTimeSlack) {
        throw std::invalid_argument("up_to outside [0, total_duration]");
    }
    const double t = std::clamp(up_to_s, 0.0, profile.total_duration_s);
    ProfileWalker walker(profile, 1.0, 1.0, 1.0);
    return walker.area_up_to(t);
}

double exact_soc_delta(const SegmentProfile& profile, const BatteryTruth& truth, double up_to_s) {
    validate(truth);
    if (!std::isfinite(up_to_s) || up_to_s < -kTimeSlack ||
        up_to_s > profile.total_duration_s + kTimeSlack) {
        throw std::invalid_argument("up_to outside [0, total_duration]");
    }
    const double t = std::clamp(up_to_s, 0.0, profile.total_duration_s);
    ProfileWalker walker(profile, truth.eta_c_true, truth.eta_d_true,
                         1.0 / (kSecondsPerHour * truth.c_true));
    return walker.area_up_to(t);
}

SocTrace true_soc_trace(const SegmentProfile& profile, const BatteryTruth& truth, double s0,
                        double delta) {
    validate(truth);
    validate(profile);
    if (!(delta > 0.0)) {
        throw std::invalid_argument("delta must be > 0");
    }
    const auto n = static_cast<std::size_t>(
        std::floor(profile.total_duration_s / delta + kTimeSlack));

    SocTrace trace;
    trace.s0 = s0;
    trace.delta = delta;
    trace.values.reserve(n);

    ProfileWalker walker(profile, truth.eta_c_true, truth.eta_d_true,
                         1.0 / (kSecondsPerHour * truth.c_true));
    for (std::size_t k = 1; k <= n; ++k) {
        const double t = std::min(static_cast<double>(k) * delta, profile.total_duration_s);
        trace.values.push_back(s0 + walker.area_up_to(t));
    }
    return trace;
}

SampledCurrent sample(const SegmentProfile& profile, double delta, double clock_error) {
    validate(profile);
    if (!(delta > 0.0)) {
        throw std::invalid_argument("delta must be > 0");
    }
    if (!std::isfinite(clock_error) || clock_error <= -1.0) {
        throw std::invalid_argument("clock_error must be finite and > -1");
    }

    const double tick = delta / (1.0 + clock_error);  // true seconds per believed delta
    const auto n = static_cast<std::size_t>(
        std::floor(profile.total_duration_s / tick + kTimeSlack));

    SampledCurrent sc;
    sc.delta = delta;
    sc.samples.reserve(n);

    // Boundary instants belong to the segment that just ended, matching the
    // backward-difference rectangle whose interval is (t(k-1), t(k)].
    std::size_t index = 0;
    double seg_end = profile.segments.empty() ? 0.0 : profile.segments[0].duration_s;
    for (std::size_t k = 1; k <= n; ++k) {
        const double t = std::min(static_cast<double>(k) * tick,
                                  profile.total_duration_s);
        while (index + 1 < profile.segments.size() && t > seg_end + kTimeSlack) {
            ++index;
            seg_end += profile.segments[index].duration_s;
        }
        sc.samples.push_back(profile.segments[index].amps);
    }
    return sc;
}

LoadStats stats(const SampledCurrent& sc, double c_batt, double sigma_i) {
    if (!(c_batt > 0.0)) {
        throw std::invalid_argument("c_batt must be > 0");
    }
    if (sigma_i < 0.0) {
        throw std::invalid_argument("sigma_i must be >= 0");
    }

    LoadStats result;
    const std::size_t n = sc.samples.size();

    if (n >= 2) {
        NeumaierSum mean_acc;
        for (double x : sc.samples) mean_acc.add(x);
        const double mean = mean_acc.value() / static_cast<double>(n);
        NeumaierSum var_acc;
        for (double x : sc.samples) var_acc.add((x - mean) * (x - mean));
        result.sigma_l = std::sqrt(var_acc.value() / static_cast<double>(n - 1));
    }
    result.rho_i_coeff = sigma_i / c_batt;
    result.rho_int_coeff = result.sigma_l / c_batt;

    // First-difference histogram: 101 uniform bins over +/- 5 s.d. of the
    // differences; outliers land in the edge bins so counts always sum to
    // n - 1.
    if (n >= 2) {
        std::vector<double> diffs;
        diffs.reserve(n - 1);
        for (std::size_t j = 1; j < n; ++j) {
            diffs.push_back(sc.samples[j] - sc.samples[j - 1]);
        }
        NeumaierSum dm;
        for (double d : diffs) dm.add(d);
        const double dmean = dm.value() / static_cast<double>(diffs.size());
        NeumaierSum dv;
        for (double d : diffs) dv.add((d - dmean) * (d - dmean));
        double dsd = diffs.size() >= 2
                         ? std::sqrt(dv.value() / static_cast<double>(diffs.size() - 1))
                         : 0.0;
        double half_span = 5.0 * dsd;
        if (half_span <= 0.0) half_span = 1.0;  // degenerate: all diffs equal

        constexpr int kBins = 101;
        const double lo = dmean - half_span;
        const double width = 2.0 * half_span / kBins;
        result.diff_histogram.resize(kBins);
        for (int b = 0; b < kBins; ++b) {
            result.diff_histogram[b].lo = lo + b * width;
            result.diff_histogram[b].hi = lo + (b + 1) * width;
        }
        for (double d : diffs) {
            int b = static_cast<int>(std::floor((d - lo) / width));
            b = std::clamp(b, 0, kBins - 1);
            ++result.diff_histogram[b].count;
        }
    }
    return result;
}

namespace {

struct CsvReader {
    std::ifstream in;
    std::string path;
    std::size_t line_no = 0;

    explicit CsvReader(const std::string& p) : in(p), path(p) {
        if (!in) {
            throw std::runtime_error("cannot open " + p);
        }
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
    }

    bool next_line(std::string& line) {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

    std::pair<double, double> parse_pair(const std::string& line) const {
        const auto comma = line.find(',');
        if (comma == std::string::npos) fail("expected two comma-separated fields");
        double a = 0.0, b = 0.0;
        const char* s1 = line.data();
        const char* e1 = line.data() + comma;
        auto r1 = std::from_chars(s1, e1, a);
        if (r1.ec != std::errc() || r1.ptr != e1) fail("bad number in first field");
        const char* s2 = line.data() + comma + 1;
        const char* e2 = line.data() + line.size();
        auto r2 = std::from_chars(s2, e2, b);
        if (r2.ec != std::errc() || r2.ptr != e2) fail("bad number in second field");
        return {a, b};
    }
};

} // namespace

SampledCurrent load_csv(const std::string& path) {
    CsvReader reader(path);
    std::string line;
    if (!reader.next_line(line)) reader.fail("empty file");
    if (line != "t_s,i_a") reader.fail("expected header 't_s,i_a'");

    std::vector<double> times;
    std::vector<double> currents;
    while (reader.next_line(line)) {
        if (line.empty()) continue;
        auto [t, i] = reader.parse_pair(line);
        if (!std::isfinite(t) || !std::isfinite(i)) reader.fail("non-finite value");
        if (!times.empty() && t <= times.back()) reader.fail("timestamps must be strictly increasing");
        times.push_back(t);
        currents.push_back(i);
    }
    if (times.size() < 2) {
        throw std::runtime_error(path + ": need at least two samples");
    }

    const double delta = times[1] - times[0];
    for (std::size_t j = 2; j < times.size(); ++j) {
        const double step = times[j] - times[j - 1];
        if (std::abs(step - delta) > 1e-6 * std::max(std::abs(delta), std::abs(step))) {
            throw std::runtime_error(path + ":" + std::to_string(j + 2) +
                                     ": non-uniform sample spacing");
        }
    }

    SampledCurrent sc;
    sc.delta = delta;
    sc.samples = std::move(currents);
    return sc;
}

SegmentProfile load_profile_csv(const std::string& path) {
    CsvReader reader(path);
    std::string line;
    if (!reader.next_line(line)) reader.fail("empty file");
    if (line != "duration_s,amps") reader.fail("expected header 'duration_s,amps'");

    std::vector<SegmentProfile::Segment> segments;
    while (reader.next_line(line)) {
        if (line.empty()) continue;
        auto [d, a] = reader.parse_pair(line);
        if (!(d > 0.0)) reader.fail("duration must be > 0");
        segments.push_back({d, a});
    }
    return SegmentProfile::from_segments(std::move(segments));
}

void write_profile_csv(const SegmentProfile& profile, std::ostream& out) {
    out << "duration_s,amps\n";
    for (const auto& seg : profile.segments) {
        out << format_double(seg.duration_s) << ',' << format_double(seg.amps) << '\n';
    }
}

} // namespace ccsoc
