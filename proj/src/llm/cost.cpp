#include "dxagent/llm/cost.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

#include "dxagent/core/error.hpp"

namespace dxagent::llm {

namespace {

using i128 = __int128;

// Parses a non-negative decimal into an integer count of 10^-scale units.
// round=false rejects values that need rounding at that precision.
std::int64_t parse_scaled(std::string_view text, int scale, bool round, ErrorCode err) {
    const std::string original(text);
    auto bad = [&](const char* why) { fail(err, "invalid amount '" + original + "': " + why); };
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) bad("empty");
    if (text.front() == '-') bad("negative");

    std::string digits;
    int frac = 0;
    bool dot = false;
    std::size_t i = 0;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digits += c;
            if (dot) ++frac;
        } else if (c == '.' && !dot) {
            dot = true;
        } else {
            break;
        }
    }
    if (digits.empty()) bad("no digits");
    int exponent = 0;
    if (i < text.size()) {
        if (text[i] != 'e' && text[i] != 'E') bad("unexpected character");
        ++i;
        bool neg = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) neg = text[i++] == '-';
        if (i == text.size()) bad("empty exponent");
        int e = 0;
        for (; i < text.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(text[i]))) bad("bad exponent");
            e = e * 10 + (text[i] - '0');
            if (e > 400) bad("exponent too large");
        }
        exponent = neg ? -e : e;
    }

    // value = digits * 10^(exponent - frac); we want value * 10^scale
    const int shift = exponent - frac + scale;
    while (digits.size() > 1 && digits.front() == '0') digits.erase(digits.begin());
    i128 v = 0;
    const i128 limit = static_cast<i128>(INT64_MAX);
    if (shift >= 0) {
        for (char c : digits) {
            v = v * 10 + (c - '0');
            if (v > limit) bad("too large");
        }
        for (int k = 0; k < shift; ++k) {
            v *= 10;
            if (v > limit && digits != "0") bad("too large");
        }
        if (digits == "0") v = 0;
    } else {
        const std::size_t drop = static_cast<std::size_t>(-shift);
        std::string kept = digits.size() > drop ? digits.substr(0, digits.size() - drop) : "";
        std::string lost = digits.size() > drop ? digits.substr(digits.size() - drop) : std::string(drop - digits.size(), '0') + digits;
        for (char c : kept) {
            v = v * 10 + (c - '0');
            if (v > limit) bad("too large");
        }
        const bool nonzero_lost = lost.find_first_not_of('0') != std::string::npos;
        if (nonzero_lost && !round) bad("more precision than supported");
        if (round && !lost.empty() && lost.front() >= '5') ++v;
    }
    return static_cast<std::int64_t>(v);
}

}  // namespace

std::string_view to_string(Role role) noexcept {
    return role == Role::reasoning_engine ? "reasoning_engine" : "aggregator";
}

Role parse_role(std::string_view text) {
    if (text == "reasoning_engine") return Role::reasoning_engine;
    if (text == "aggregator") return Role::aggregator;
    fail(ErrorCode::ConfigInvalid, "unknown role '" + std::string(text) + "'");
}

std::string UsdMicros::str() const {
    const std::int64_t a = micros_ < 0 ? -micros_ : micros_;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%06lld", micros_ < 0 ? "-" : "", static_cast<long long>(a / 1000000),
                  static_cast<long long>(a % 1000000));
    return buf;
}

UsdMicros parse_usd(std::string_view text) {
    return UsdMicros(parse_scaled(text, 6, true, ErrorCode::InvalidArgument));
}

std::int64_t parse_pico(std::string_view decimal) {
    return parse_scaled(decimal, 12, false, ErrorCode::ConfigInvalid);
}

Price make_price(std::string_view per_input_token, std::string_view per_output_token) {
    return {parse_pico(per_input_token), parse_pico(per_output_token)};
}

UsdMicros compute_cost(const Usage& usage, const Price& price) {
    if (usage.input_tokens < 0 || usage.output_tokens < 0) fail(ErrorCode::InvalidArgument, "negative token count");
    if (price.input_pico < 0 || price.output_pico < 0) fail(ErrorCode::InvalidArgument, "negative price");
    const i128 pico = static_cast<i128>(usage.input_tokens) * price.input_pico +
                      static_cast<i128>(usage.output_tokens) * price.output_pico;
    return UsdMicros(static_cast<std::int64_t>((pico + 500000) / 1000000));
}

void PricingTable::set(const std::string& provider_id, const std::string& model_name, Price price) {
    if (price.input_pico < 0 || price.output_pico < 0) fail(ErrorCode::ConfigInvalid, "negative price for " + model_name);
    prices_[{provider_id, model_name}] = price;
}

Price PricingTable::find(const std::string& provider_id, const std::string& model_name) const {
    auto it = prices_.find({provider_id, model_name});
    return it == prices_.end() ? Price{} : it->second;
}

bool PricingTable::contains(const std::string& provider_id, const std::string& model_name) const {
    return prices_.count({provider_id, model_name}) > 0;
}

void CostLedger::append(LedgerEntry entry) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(entry));
}

std::vector<LedgerEntry> CostLedger::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

UsdMicros CostLedger::total() const {
    std::lock_guard lock(mu_);
    UsdMicros sum;
    for (const auto& e : entries_) sum += e.cost;
    return sum;
}

UsdMicros CostLedger::total_for(std::string_view case_id) const {
    std::lock_guard lock(mu_);
    UsdMicros sum;
    for (const auto& e : entries_)
        if (e.case_id == case_id) sum += e.cost;
    return sum;
}

Usage CostLedger::usage_for(std::string_view case_id) const {
    std::lock_guard lock(mu_);
    Usage u;
    for (const auto& e : entries_) {
        if (e.case_id != case_id) continue;
        u.input_tokens += e.usage.input_tokens;
        u.output_tokens += e.usage.output_tokens;
    }
    return u;
}

std::size_t CostLedger::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::string CostLedger::to_csv() const {
    std::ostringstream out;
    out << "case_id,role,input_tokens,output_tokens,cost_usd\n";
    for (const auto& e : entries()) {
        std::string id = e.case_id;
        if (id.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : id) q += c == '"' ? std::string("\"\"") : std::string(1, c);
            id = q + "\"";
        }
        out << id << ',' << to_string(e.role) << ',' << e.usage.input_tokens << ',' << e.usage.output_tokens << ','
            << e.cost.str() << '\n';
    }
    return out.str();
}

LedgerSummary summarize_ledger(const CostLedger& ledger, std::int64_t n_cases) {
    if (n_cases < 1) fail(ErrorCode::InvalidArgument, "n_cases must be >= 1");
    if (ledger.size() == 0) fail(ErrorCode::EmptyLedger, "ledger has no entries");
    const UsdMicros overall = ledger.total();
    const std::int64_t avg = (overall.micros() * 2 + n_cases) / (2 * n_cases);
    return {UsdMicros(avg), overall};
}

}  // namespace dxagent::llm
