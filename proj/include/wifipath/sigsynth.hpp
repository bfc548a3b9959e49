// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace wifipath::sigsynth {

using Sample = std::complex<double>;

enum class Modulation { BPSK, QPSK, PSK8, QAM16, QAM64, OOK };

std::span<const Modulation> all_modulations();
std::string_view modulation_name(Modulation kind);
/// Throws wifipath::Error("unsupported modulation: ...") for unknown names.
Modulation parse_modulation(std::string_view name);

/// Target SNR meaning "no noise injected".
inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

inline constexpr std::size_t kFrameLength = 1024;

struct IqFrame {
    std::vector<Sample> samples;
    std::vector<Sample> clean;
    Modulation modulation = Modulation::BPSK;
    double snr_db_target = kNoiseless;
    std::uint64_t seed = 0;

    /// samples - clean, sample by sample.
    std::vector<Sample> noise() const;
};

/// Unit-mean-power constellation points for `kind`.
std::vector<Sample> constellation(Modulation kind);

/// Uniform i.i.d. symbols plus complex AWGN whose variance is the frame's
/// mean clean power divided by 10^(snr_db/10). Deterministic in all arguments.
IqFrame synth_frame(Modulation kind, double snr_db, std::size_t n = kFrameLength,
                    std::uint64_t seed = 0);

/// 10*log10(mean|clean|^2 / mean|samples - clean|^2); +inf for a noiseless frame.
double measure_snr(const IqFrame& frame);

}  // namespace wifipath::sigsynth
