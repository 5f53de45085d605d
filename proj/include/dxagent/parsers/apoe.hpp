#pragma once

#include <string>

#include "dxagent/parsers/vcf.hpp"

namespace dxagent::apoe {

inline constexpr const char* kRs429358 = "rs429358";
inline constexpr const char* kRs7412 = "rs7412";

struct Inference {
    std::string genotype;  // "x/y", ascending
    bool ambiguous = false;

    bool operator==(const Inference&) const = default;
};

/// Two-SNP haplotype table over (rs429358, rs7412):
/// e2 = (T,T), e3 = (T,C), e4 = (C,C). An unphased double heterozygote is
/// reported as 2/4 with ambiguous = true; phase is never guessed.
Inference infer(const vcf::GenotypeCall& rs429358, const vcf::GenotypeCall& rs7412);

}  // namespace dxagent::apoe
