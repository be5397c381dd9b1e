#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <unistd.h>

#include <openssl/evp.h>

#include "pne/constants.hpp"
#include "pne/error.hpp"

namespace pne {

/// Shortest round-trip decimal; "NA" for NaN.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string fmt(long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : cols_(header.size()) { append(header); }

    template <class... T>
    void row(const T&... cells) {
        static_assert(sizeof...(T) > 0);
        std::vector<std::string> v{cell(cells)...};
        if (v.size() != cols_) fail(ErrorKind::InternalError, "CSV row width mismatch");
        append(v);
    }
    const std::string& text() const { return text_; }

private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    template <class N>
    static std::string cell(const N& x) {
        return fmt(x);
    }
    void append(const std::vector<std::string>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) text_ += ',';
            text_ += v[i];
        }
        text_ += '\n';
    }
    std::size_t cols_;
    std::string text_;
};

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) fail(ErrorKind::InternalError, "SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Write to a temporary sibling then rename, so readers never see a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::InvalidInput, "cannot write " + tmp);
        out << content;
        out.flush();
        if (!out) fail(ErrorKind::InvalidInput, "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorKind::InvalidInput, "cannot rename into " + path.string());
    }
}

inline std::vector<std::pair<std::string, std::string>> constants_snapshot() {
    using namespace constants;
    return {
        {"resolution_ratio", fmt(kResolutionRatio)},
        {"rowsum_slack", fmt(kRowsumSlack)},
        {"max_refined_nodes", fmt(static_cast<long>(kMaxRefinedNodes))},
        {"default_limit_nodes", fmt(static_cast<long>(kDefaultLimitNodes))},
        {"default_time_samples", fmt(kDefaultTimeSamples)},
        {"min_steps_per_period", fmt(kMinStepsPerPeriod)},
        {"dense_monodromy_limit", fmt(static_cast<long>(kDenseMonodromyLimit))},
        {"taylor_tail_tol", fmt(kTaylorTailTol)},
        {"taylor_max_norm", fmt(kTaylorMaxNorm)},
        {"lu_cache_bytes", fmt(static_cast<long>(kLuCacheBytes))},
        {"default_tol", fmt(kDefaultTol)},
        {"default_max_iters", fmt(kDefaultMaxIters)},
        {"max_squarings", fmt(kMaxSquarings)},
        {"degenerate_normalization", fmt(kDegenerateNormalization)},
        {"finite_difference_step", fmt(kFiniteDifferenceStep)},
        {"frozen_time_samples", fmt(kFrozenTimeSamples)},
        {"tau_small", fmt(kTauSmall)},
        {"tau_large", fmt(kTauLarge)},
        {"mu_small", fmt(kMuSmall)},
        {"mu_large", fmt(kMuLarge)},
        {"sigma_large", fmt(kSigmaLarge)},
        {"tau_limit_gap", fmt(kTauLimitGap)},
        {"mu_zero_gap", fmt(kMuZeroGap)},
        {"mu_inf_gap", fmt(kMuInfGap)},
        {"sigma_inf_gap", fmt(kSigmaInfGap)},
        {"sigma_zero_gap", fmt(kSigmaZeroGap)},
        {"bound_slack", fmt(kBoundSlack)},
        {"monotone_slack", fmt(kMonotoneSlack)},
        {"extinction_threshold", fmt(kExtinctionThreshold)},
        {"max_periods", fmt(kMaxPeriods)},
        {"poincare_tol", fmt(kPoincareTol)},
        {"step_retries", fmt(kStepRetries)},
        {"initial_scale", fmt(kInitialScale)},
        {"margin_factor", fmt(kMarginFactor)},
        {"kpp_limit_error", fmt(kKppLimitError)},
        {"kpp_control_error", fmt(kKppControlError)},
        {"boundedness_slack", fmt(kBoundednessSlack)},
        {"exp_overflow_guard", fmt(kExpOverflowGuard)},
        {"newton_max_iters", fmt(kNewtonMaxIters)},
        {"shooting_tol", fmt(kShootingTol)},
        {"oracle_min_steps", fmt(kOracleMinSteps)},
    };
}

/// Key-value run manifest with [sections].
class Manifest {
public:
    void set(const std::string& key, const std::string& value) { header_.emplace_back(key, value); }
    void config(std::vector<std::pair<std::string, std::string>> echo) { config_ = std::move(echo); }
    void timing(const std::string& label, double ms) { timings_.emplace_back(label, fmt(std::round(ms * 1000.0) / 1000.0)); }
    void extra(const std::string& key, const std::string& value) { extra_.emplace_back(key, value); }
    void file(const std::string& name, const std::string& content) { files_.emplace_back(name, "sha256:" + sha256_hex(content)); }

    std::string text() const {
        std::string out;
        auto block = [&](const char* title, const std::vector<std::pair<std::string, std::string>>& kv) {
            if (title) out += std::string("\n[") + title + "]\n";
            for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
        };
        block(nullptr, header_);
        block("config", config_);
        block("constants", constants_snapshot());
        if (!extra_.empty()) block("details", extra_);
        block("wall_ms", timings_);
        block("files", files_);
        return out;
    }

private:
    std::vector<std::pair<std::string, std::string>> header_, config_, timings_, extra_, files_;
};

}  // namespace pne
