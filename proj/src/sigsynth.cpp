// SPDX-License-Identifier: Apache-2.0
#include "wifipath/sigsynth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "wifipath/errors.hpp"
#include "wifipath/rng.hpp"

namespace wifipath::sigsynth {

namespace {

constexpr std::array kModulations{Modulation::BPSK, Modulation::QPSK, Modulation::PSK8,
                                  Modulation::QAM16, Modulation::QAM64, Modulation::OOK};

std::vector<Sample> square_qam(int side) {
    // Odd-integer grid {±1, ±3, ...}, scaled to unit mean power.
    std::vector<Sample> points;
    points.reserve(static_cast<std::size_t>(side * side));
    double power = 0.0;
    for (int i = 0; i < side; ++i) {
        for (int q = 0; q < side; ++q) {
            const Sample p(2.0 * i - (side - 1), 2.0 * q - (side - 1));
            power += std::norm(p);
            points.push_back(p);
        }
    }
    const double scale = 1.0 / std::sqrt(power / static_cast<double>(points.size()));
    for (auto& p : points) {
        p *= scale;
    }
    return points;
}

std::vector<Sample> psk(int order) {
    std::vector<Sample> points;
    points.reserve(static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) {
        points.push_back(std::polar(1.0, 2.0 * std::numbers::pi * k / order));
    }
    return points;
}

}  // namespace

std::span<const Modulation> all_modulations() { return kModulations; }

std::string_view modulation_name(Modulation kind) {
    switch (kind) {
        case Modulation::BPSK: return "BPSK";
        case Modulation::QPSK: return "QPSK";
        case Modulation::PSK8: return "PSK8";
        case Modulation::QAM16: return "QAM16";
        case Modulation::QAM64: return "QAM64";
        case Modulation::OOK: return "OOK";
    }
    throw Error("unsupported modulation");
}

Modulation parse_modulation(std::string_view name) {
    for (Modulation kind : kModulations) {
        if (modulation_name(kind) == name) {
            return kind;
        }
    }
    throw Error("unsupported modulation: " + std::string(name));
}

std::vector<Sample> IqFrame::noise() const {
    std::vector<Sample> out(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        out[k] = samples[k] - clean[k];
    }
    return out;
}

std::vector<Sample> constellation(Modulation kind) {
    switch (kind) {
        case Modulation::BPSK: return {Sample(1.0, 0.0), Sample(-1.0, 0.0)};
        case Modulation::QPSK: {
            const double a = 1.0 / std::numbers::sqrt2;
            return {Sample(a, a), Sample(-a, a), Sample(-a, -a), Sample(a, -a)};
        }
        case Modulation::PSK8: return psk(8);
        case Modulation::QAM16: return square_qam(4);
        case Modulation::QAM64: return square_qam(8);
        case Modulation::OOK: return {Sample(0.0, 0.0), Sample(std::numbers::sqrt2, 0.0)};
    }
    throw Error("unsupported modulation");
}

IqFrame synth_frame(Modulation kind, double snr_db, std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw Error("frame length must be at least 1");
    }
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
        throw Error("invalid SNR");
    }
    const auto points = constellation(kind);

    IqFrame frame;
    frame.modulation = kind;
    frame.snr_db_target = snr_db;
    frame.seed = seed;
    frame.clean.resize(n);

    Rng rng(seed);
    double power = 0.0;
    for (auto& s : frame.clean) {
        s = points[rng.below(points.size())];
        power += std::norm(s);
    }
    power /= static_cast<double>(n);

    frame.samples = frame.clean;
    if (std::isinf(snr_db)) {
        return frame;
    }
    // Per-component standard deviation sqrt(sigma^2 / 2).
    const double noise_var = power / std::pow(10.0, snr_db / 10.0);
    const double sigma = std::sqrt(noise_var / 2.0);
    for (auto& s : frame.samples) {
        const double ni = rng.normal();
        const double nq = rng.normal();
        s += Sample(sigma * ni, sigma * nq);
    }
    return frame;
}

double measure_snr(const IqFrame& frame) {
    if (frame.samples.size() != frame.clean.size() || frame.clean.empty()) {
        throw Error("degenerate frame");
    }
    double signal = 0.0;
    double noise = 0.0;
    for (std::size_t k = 0; k < frame.clean.size(); ++k) {
        signal += std::norm(frame.clean[k]);
        noise += std::norm(frame.samples[k] - frame.clean[k]);
    }
    if (signal == 0.0) {
        throw Error("degenerate frame");
    }
    if (noise == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(signal / noise);
}

}  // namespace wifipath::sigsynth
