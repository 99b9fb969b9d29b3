#pragma once

#include <span>
#include <vector>

#include "stimclean/core.hpp"

namespace stimclean::baselines {

/// Causal template subtraction: segment i (in peak order) loses the mean of the
/// previous k_hist raw segments; the first segment passes through. Templates are
/// blended with the same overlap-add window as SMARTA+.
Recording template_subtraction(const Recording& rec, std::span<const SampleIndex> peaks, int k_hist = 10);

/// Replaces [peak - pre_ms, peak - pre_ms + blank_ms) with a line between the
/// neighboring samples (clamped at the recording edges).
Recording pulse_blanking(const Recording& rec, std::span<const SampleIndex> peaks, double blank_ms = 2.5,
                         double pre_ms = 0.5);

struct Blanked {
    Recording lfp;
    std::vector<SampleInterval> mask;  // zeroed ranges, one per period
    SampleIndex masked_samples() const;
};

/// Zeroes the first blank_ms of every stimulation period.
Blanked transient_blanking(const Recording& rec, const StimPeriods& periods, double blank_ms = 550.0);

}  // namespace stimclean::baselines
