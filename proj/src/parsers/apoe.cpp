#include "dxagent/parsers/apoe.hpp"

#include <algorithm>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"

namespace dxagent::apoe {

namespace {

void check_alleles(const vcf::GenotypeCall& call, const char* site, const char* ref, const char* alt) {
    if (!call.dosage) fail(ErrorCode::MissingCall, std::string(site) + " has no called genotype");
    if (*call.dosage < 0 || *call.dosage > 2) fail(ErrorCode::InconsistentAlleles, std::string(site) + " dosage out of range");
    // Calls built from genotype lists carry no allele strings.
    if (call.ref_allele.empty() && call.alt_allele.empty()) return;
    if (to_lower(call.ref_allele) != to_lower(ref) || to_lower(call.alt_allele) != to_lower(alt))
        fail(ErrorCode::InconsistentAlleles, std::string(site) + " expected " + ref + ">" + alt + ", found " +
                                                 call.ref_allele + ">" + call.alt_allele);
}

// haplotype (C at rs429358?, T at rs7412?) -> epsilon allele
int epsilon(bool c_429358, bool t_7412) {
    if (!c_429358 && t_7412) return 2;
    if (!c_429358 && !t_7412) return 3;
    if (c_429358 && !t_7412) return 4;
    fail(ErrorCode::InconsistentAlleles, "haplotype C-rs429358/T-rs7412 is outside the e2/e3/e4 table");
}

// Per-haplotype alt flags. Homozygous sites are phase-free, and with a single
// heterozygous site the assignment of its alt allele is immaterial.
std::array<bool, 2> haplotypes(const vcf::GenotypeCall& call, bool use_phase) {
    if (use_phase) return {call.alleles[0] == 1, call.alleles[1] == 1};
    return {*call.dosage >= 1, *call.dosage == 2};
}

}  // namespace

Inference infer(const vcf::GenotypeCall& rs429358, const vcf::GenotypeCall& rs7412) {
    check_alleles(rs429358, kRs429358, "T", "C");
    check_alleles(rs7412, kRs7412, "C", "T");

    const bool het_a = *rs429358.dosage == 1, het_b = *rs7412.dosage == 1;
    Inference out;
    int e1 = 0, e2 = 0;
    if (het_a && het_b && !(rs429358.phased && rs7412.phased)) {
        e1 = 2;
        e2 = 4;
        out.ambiguous = true;
    } else {
        const bool use_phase = het_a && het_b;  // both phased here
        const auto a = haplotypes(rs429358, use_phase);
        const auto b = haplotypes(rs7412, use_phase);
        e1 = epsilon(a[0], b[0]);
        e2 = epsilon(a[1], b[1]);
    }
    if (e1 > e2) std::swap(e1, e2);
    out.genotype = std::to_string(e1) + "/" + std::to_string(e2);
    return out;
}

}  // namespace dxagent::apoe
