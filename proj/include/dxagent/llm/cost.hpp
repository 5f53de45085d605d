#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dxagent::llm {

enum class Role { reasoning_engine, aggregator };

std::string_view to_string(Role role) noexcept;
Role parse_role(std::string_view text);

struct Usage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;

    bool operator==(const Usage&) const = default;
};

/// Whole micro-dollars. Arithmetic is exact; rendering uses six decimals.
class UsdMicros {
public:
    constexpr UsdMicros() = default;
    constexpr explicit UsdMicros(std::int64_t micros) : micros_(micros) {}

    constexpr std::int64_t micros() const noexcept { return micros_; }
    std::string str() const;  // "0.000534"
    double dollars() const noexcept { return static_cast<double>(micros_) / 1e6; }

    UsdMicros& operator+=(UsdMicros o) noexcept {
        micros_ += o.micros_;
        return *this;
    }
    friend UsdMicros operator+(UsdMicros a, UsdMicros b) noexcept { return a += b; }
    auto operator<=>(const UsdMicros&) const = default;

private:
    std::int64_t micros_ = 0;
};

/// Parses a non-negative decimal dollar amount ("2.77", "1e-7") rounding
/// half-up to micro-dollars.
UsdMicros parse_usd(std::string_view text);

/// Per-token prices kept in pico-dollars so sub-micro unit prices stay exact.
struct Price {
    std::int64_t input_pico = 0;
    std::int64_t output_pico = 0;

    bool operator==(const Price&) const = default;
};

/// Parses a non-negative decimal (plain or exponent notation) into
/// pico-dollars. Throws ConfigInvalid on negative, malformed or
/// sub-pico-precision input.
std::int64_t parse_pico(std::string_view decimal);

Price make_price(std::string_view per_input_token, std::string_view per_output_token);

/// input * price_in + output * price_out, rounded half-up to micro-dollars.
UsdMicros compute_cost(const Usage& usage, const Price& price);

class PricingTable {
public:
    void set(const std::string& provider_id, const std::string& model_name, Price price);
    // Unknown models are priced at zero.
    Price find(const std::string& provider_id, const std::string& model_name) const;
    bool contains(const std::string& provider_id, const std::string& model_name) const;

private:
    std::map<std::pair<std::string, std::string>, Price> prices_;
};

struct LedgerEntry {
    std::string case_id;
    Role role = Role::reasoning_engine;
    Usage usage;
    UsdMicros cost;
    std::string model_name;

    bool operator==(const LedgerEntry&) const = default;
};

/// Append-only and safe for concurrent appends; each append is atomic.
class CostLedger {
public:
    void append(LedgerEntry entry);
    std::vector<LedgerEntry> entries() const;
    UsdMicros total() const;
    UsdMicros total_for(std::string_view case_id) const;
    Usage usage_for(std::string_view case_id) const;
    std::size_t size() const;

    // case_id,role,input_tokens,output_tokens,cost_usd
    std::string to_csv() const;

private:
    mutable std::mutex mu_;
    std::vector<LedgerEntry> entries_;
};

struct LedgerSummary {
    UsdMicros avg_cost_per_case;  // overall / n_cases, rounded half-up
    UsdMicros overall_cost;
};

/// EmptyLedger if there are no entries; n_cases must be >= 1.
LedgerSummary summarize_ledger(const CostLedger& ledger, std::int64_t n_cases);

}  // namespace dxagent::llm
