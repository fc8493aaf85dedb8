#include "mpcnn/mp_features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "mpcnn/error.hpp"

namespace mpcnn {

using detail::get_f32;
using detail::get_u32;
using detail::get_u8;
using detail::put_f32;
using detail::put_u32;
using detail::put_u8;

const char* channel_name(Channel c) {
    switch (c) {
        case Channel::MinDP: return "MinDP";
        case Channel::MaxDP: return "MaxDP";
        case Channel::MeanDP: return "MeanDP";
    }
    return "?";
}

std::vector<Channel> parse_channels(const std::string& selection) {
    std::uint8_t mask = 0;
    std::stringstream ss(selection);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::string t;
        for (char c : item) {
            if (!std::isspace(static_cast<unsigned char>(c)))
                t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        if (t.empty()) continue;
        if (t == "min" || t == "mindp") {
            mask |= channel_bit(Channel::MinDP);
        } else if (t == "max" || t == "maxdp") {
            mask |= channel_bit(Channel::MaxDP);
        } else if (t == "mean" || t == "meandp") {
            mask |= channel_bit(Channel::MeanDP);
        } else {
            throw Error("BadChannel", "unknown channel '" + item + "'");
        }
    }
    if (mask == 0) throw Error("BadChannel", "empty channel selection");
    return channels_from_mask(mask);
}

std::uint8_t channel_mask(const std::vector<Channel>& channels) {
    std::uint8_t mask = 0;
    for (Channel c : channels) mask |= channel_bit(c);
    return mask;
}

std::vector<Channel> channels_from_mask(std::uint8_t mask) {
    std::vector<Channel> out;
    for (Channel c : {Channel::MinDP, Channel::MaxDP, Channel::MeanDP}) {
        if (mask & channel_bit(c)) out.push_back(c);
    }
    return out;
}

SubsequenceMatrix build_subsequences(const std::vector<double>& samples,
                                     const std::vector<std::size_t>& anchors,
                                     std::size_t m) {
    if (m < 2) throw Error("BadSubsequenceLength", "m must be >= 2");
    SubsequenceMatrix a;
    a.m = m;
    for (std::size_t s : anchors) {
        if (s + m > samples.size()) continue;
        a.start_indices.push_back(s);
        a.rows.insert(a.rows.end(), samples.begin() + static_cast<std::ptrdiff_t>(s),
                      samples.begin() + static_cast<std::ptrdiff_t>(s + m));
    }
    a.k = a.start_indices.size();
    if (a.k < 2) {
        throw Error("TooFewSubsequences",
                    "need at least 2 subsequences, got " + std::to_string(a.k));
    }
    return a;
}

DistanceMatrix distance_profile(const SubsequenceMatrix& a) {
    DistanceMatrix d;
    d.k = a.k;
    d.d.assign(a.k * a.k, 0.0);
    for (std::size_t i = 0; i < a.k; ++i) {
        const double* ri = &a.rows[i * a.m];
        for (std::size_t j = i + 1; j < a.k; ++j) {
            const double* rj = &a.rows[j * a.m];
            double acc = 0.0;
            for (std::size_t t = 0; t < a.m; ++t) {
                const double diff = ri[t] - rj[t];
                acc += diff * diff;
            }
            const double dist = std::sqrt(acc);
            d.d[i * a.k + j] = dist;
            d.d[j * a.k + i] = dist;
        }
    }
    return d;
}

ProfileReduction reduce_profiles(const DistanceMatrix& d) {
    if (d.k < 2) throw Error("TooFewSubsequences", "reduction needs k >= 2");
    ProfileReduction r;
    r.x_min.assign(d.k, std::numeric_limits<double>::infinity());
    r.x_max.assign(d.k, -std::numeric_limits<double>::infinity());
    r.x_mean.assign(d.k, 0.0);
    for (std::size_t j = 0; j < d.k; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < d.k; ++i) {
            if (i == j) continue;
            const double v = d.at(i, j);
            r.x_min[j] = std::min(r.x_min[j], v);
            r.x_max[j] = std::max(r.x_max[j], v);
            sum += v;
        }
        r.x_mean[j] = sum / static_cast<double>(d.k - 1);
    }
    return r;
}

std::vector<double> minmax_normalize(const std::vector<double>& v) {
    if (v.empty()) throw Error("EmptyInput", "cannot normalize an empty vector");
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(v.size(), 0.0);
    if (hi > lo) {
        const double scale = hi - lo;
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / scale;
    }
    return out;
}

std::vector<double> cubic_spline_resample(const std::vector<double>& v, std::size_t length) {
    const std::size_t k = v.size();
    if (k < 2) throw Error("TooFewSubsequences", "resampling needs at least 2 knots");
    if (length == 0) return {};
    if (length == 1) return {v.front()};

    const double knot_step = 1.0 / static_cast<double>(k - 1);
    std::vector<double> out(length);

    auto segment_of = [&](double t) {
        // knot interval containing t, clamped to [0, k-2]
        std::size_t j = static_cast<std::size_t>(t / knot_step);
        return std::min(j, k - 2);
    };

    if (k <= 3) {  // linear interpolation for degenerate knot counts
        for (std::size_t i = 0; i < length; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(length - 1);
            const std::size_t j = segment_of(t);
            const double local = (t - static_cast<double>(j) * knot_step) / knot_step;
            out[i] = v[j] + (v[j + 1] - v[j]) * local;
        }
        return out;
    }

    // Natural spline: solve for second derivatives M with M[0] = M[k-1] = 0.
    // Uniform knot spacing h makes the tridiagonal system constant: the
    // interior rows are h/6 * [1 4 1] * M = d2(v). Thomas algorithm.
    const double h = knot_step;
    const std::size_t interior = k - 2;
    std::vector<double> rhs(interior), diag(interior, 4.0 * h);
    for (std::size_t i = 0; i < interior; ++i) {
        rhs[i] = 6.0 * ((v[i + 2] - v[i + 1]) / h - (v[i + 1] - v[i]) / h);
    }
    std::vector<double> m(k, 0.0);
    {
        std::vector<double> c_prime(interior, 0.0), d_prime(interior, 0.0);
        c_prime[0] = h / diag[0];
        d_prime[0] = rhs[0] / diag[0];
        for (std::size_t i = 1; i < interior; ++i) {
            const double denom = diag[i] - h * c_prime[i - 1];
            c_prime[i] = h / denom;
            d_prime[i] = (rhs[i] - h * d_prime[i - 1]) / denom;
        }
        m[interior] = d_prime[interior - 1];
        for (std::size_t i = interior - 1; i > 0; --i) {
            m[i] = d_prime[i - 1] - c_prime[i - 1] * m[i + 1];
        }
    }

    for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(length - 1);
        const std::size_t j = segment_of(t);
        const double x0 = static_cast<double>(j) * h;
        const double a = (x0 + h - t) / h;
        const double b = (t - x0) / h;
        out[i] = a * v[j] + b * v[j + 1] +
                 ((a * a * a - a) * m[j] + (b * b * b - b) * m[j + 1]) * (h * h) / 6.0;
    }
    return out;
}

FeatureSegment extract_features(const AnalysisWindow& window, const BeatIndices& beats,
                                const WindowConfig& wc,
                                const std::vector<Channel>& channels, std::size_t length) {
    std::vector<std::size_t> anchors;
    if (wc.start_fiducial == StartFiducial::P) {
        anchors = beats.p_peaks;
    } else {
        for (std::size_t r : beats.r_peaks) {
            if (r >= wc.q_offset) anchors.push_back(r - wc.q_offset);
        }
    }

    const SubsequenceMatrix a = build_subsequences(window.samples, anchors, wc.m);
    const DistanceMatrix d = distance_profile(a);
    const ProfileReduction red = reduce_profiles(d);

    FeatureSegment seg;
    seg.record_id = window.record_id;
    seg.center_minute = static_cast<std::uint32_t>(window.center_minute);
    seg.label = window.label;
    seg.length = static_cast<std::uint32_t>(length);
    seg.channels = channels;
    seg.values.reserve(length * channels.size());

    for (Channel c : channels) {
        const std::vector<double>* src = nullptr;
        switch (c) {
            case Channel::MinDP: src = &red.x_min; break;
            case Channel::MaxDP: src = &red.x_max; break;
            case Channel::MeanDP: src = &red.x_mean; break;
        }
        std::vector<double> resampled = cubic_spline_resample(minmax_normalize(*src), length);
        for (double& x : resampled) x = std::clamp(x, 0.0, 1.0);
        seg.values.insert(seg.values.end(), resampled.begin(), resampled.end());
    }
    return seg;
}

void write_features(const std::string& path, const std::vector<FeatureSegment>& segments,
                    std::size_t length, const std::vector<Channel>& channels,
                    const std::string& provenance) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot open " + path + " for writing");

    out.write("MPF1", 4);
    put_u32(out, static_cast<std::uint32_t>(length));
    put_u8(out, static_cast<std::uint8_t>(channels.size()));
    put_u8(out, channel_mask(channels));
    put_u32(out, static_cast<std::uint32_t>(segments.size()));

    for (const auto& seg : segments) {
        char id[8];
        std::memset(id, ' ', sizeof(id));
        std::memcpy(id, seg.record_id.data(), std::min<std::size_t>(8, seg.record_id.size()));
        out.write(id, 8);
        put_u32(out, seg.center_minute);
        put_u8(out, static_cast<std::uint8_t>(seg.label));
        for (double v : seg.values) put_f32(out, static_cast<float>(v));
    }

    put_u32(out, static_cast<std::uint32_t>(provenance.size()));
    out.write(provenance.data(), static_cast<std::streamsize>(provenance.size()));
    if (!out) throw Error("IoError", "write failed: " + path);
}

FeatureFile read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "MPF1", 4) != 0) {
        throw Error("BadMagic", path + ": not a feature file");
    }

    FeatureFile f;
    f.length = get_u32(in, path);
    if (f.length == 0 || f.length > 10'000'000) {
        throw Error("UnsupportedFormat", path + ": implausible segment length");
    }
    const std::uint8_t c = get_u8(in, path);
    const std::uint8_t mask = get_u8(in, path);
    f.channels = channels_from_mask(mask);
    if (f.channels.size() != c) {
        throw Error("BadChannel", path + ": channel count does not match bitmask");
    }
    const std::uint32_t count = get_u32(in, path);

    f.segments.reserve(count);
    for (std::uint32_t s = 0; s < count; ++s) {
        FeatureSegment seg;
        char id[8];
        if (!in.read(id, 8)) throw Error("TruncatedFile", path);
        std::size_t len = 8;
        while (len > 0 && id[len - 1] == ' ') --len;
        seg.record_id.assign(id, len);
        seg.center_minute = get_u32(in, path);
        const std::uint8_t lab = get_u8(in, path);
        if (lab > 1) throw Error("BadLabelChar", path + ": label byte " + std::to_string(lab));
        seg.label = static_cast<Label>(lab);
        seg.length = f.length;
        seg.channels = f.channels;
        const std::size_t n = static_cast<std::size_t>(f.length) * f.channels.size();
        seg.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) seg.values[i] = get_f32(in, path);
        f.segments.push_back(std::move(seg));
    }

    // optional provenance trailer
    unsigned char probe[4];
    if (in.read(reinterpret_cast<char*>(probe), 4)) {
        const std::uint32_t plen = static_cast<std::uint32_t>(probe[0]) |
                                   (static_cast<std::uint32_t>(probe[1]) << 8) |
                                   (static_cast<std::uint32_t>(probe[2]) << 16) |
                                   (static_cast<std::uint32_t>(probe[3]) << 24);
        std::string text(plen, '\0');
        if (in.read(text.data(), plen)) f.provenance = std::move(text);
    }
    return f;
}

}  // namespace mpcnn
