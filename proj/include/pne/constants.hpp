#pragma once

#include <cstddef>

// Every tolerance, proxy parameter and threshold used by the library lives
// here so a run manifest can snapshot them in one place.
namespace pne::constants {

// grid-kernel
inline constexpr double kResolutionRatio = 4.0;       // require h <= sigma / 4
inline constexpr double kRowsumSlack = 1e-8;          // rowsum <= 1 + slack
inline constexpr std::size_t kMaxRefinedNodes = 2048;  // hard cap for sigma -> 0 refinement
inline constexpr std::size_t kDefaultLimitNodes = 256;  // node budget of the small-sigma limit run

// coefficients
inline constexpr int kDefaultTimeSamples = 64;

// evolution
inline constexpr int kMinStepsPerPeriod = 32;
inline constexpr std::size_t kDenseMonodromyLimit = 256;
inline constexpr double kTaylorTailTol = 1e-17;      // relative tail of the shifted Taylor series
inline constexpr double kTaylorMaxNorm = 30.0;       // substep the exponential above this norm
inline constexpr std::size_t kLuCacheBytes = 512u << 20;

// eigensolver
inline constexpr double kDefaultTol = 1e-10;
inline constexpr int kDefaultMaxIters = 10000;
inline constexpr int kMaxSquarings = 40;
inline constexpr double kDegenerateNormalization = 1e-12;
inline constexpr double kFiniteDifferenceStep = 1e-3;  // relative tau step

// asymptotics: extreme-parameter proxies
inline constexpr int kFrozenTimeSamples = 256;  // Simpson samples for the integral of frozen-time eigenvalues
inline constexpr double kTauSmall = 1e-3;
inline constexpr double kTauLarge = 1e3;
inline constexpr double kMuSmall = 1e-3;
inline constexpr double kMuLarge = 1e4;
inline constexpr double kSigmaLarge = 1e2;
inline constexpr double kTauLimitGap = 5e-3;
inline constexpr double kMuZeroGap = 1e-2;
inline constexpr double kMuInfGap = 5e-2;
inline constexpr double kSigmaInfGap = 1e-2;
inline constexpr double kSigmaZeroGap = 5e-2;
inline constexpr double kBoundSlack = 1e-10;
inline constexpr double kMonotoneSlack = 1e-6;

// kpp
inline constexpr double kExtinctionThreshold = 1e-8;
inline constexpr int kMaxPeriods = 500;
inline constexpr double kPoincareTol = 1e-10;
inline constexpr int kStepRetries = 3;
inline constexpr double kInitialScale = 0.1;
inline constexpr double kMarginFactor = 10.0;
inline constexpr double kKppLimitError = 5e-2;
inline constexpr double kKppControlError = 2e-3;
inline constexpr double kBoundednessSlack = 1e-6;

// ode-oracle
inline constexpr double kExpOverflowGuard = 700.0;
inline constexpr int kNewtonMaxIters = 50;
inline constexpr double kShootingTol = 1e-12;
inline constexpr int kOracleMinSteps = 2048;  // internal steps per period for both scalar oracles

}  // namespace pne::constants
