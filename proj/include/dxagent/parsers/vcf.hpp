#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dxagent::vcf {

struct GenotypeCall {
    std::string rsid;
    std::string chrom;
    std::int64_t pos = 0;
    std::string ref_allele;
    std::string alt_allele;
    std::optional<int> dosage;          // count of ALT alleles; empty iff GT has "."
    bool phased = false;
    std::array<int, 2> alleles{-1, -1};  // per-haplotype allele index, -1 = missing

    bool operator==(const GenotypeCall&) const = default;
};

/// A variant to extract. Matched by rsid first, then by (chrom, pos) when a
/// position is configured; "chr" prefixes are ignored when comparing.
struct WantedVariant {
    std::string rsid;
    std::optional<std::string> chrom{};
    std::optional<std::int64_t> pos{};
};

enum class IssueKind { MalformedGT, MultiAllelic, MalformedLine, Duplicate };

struct VariantIssue {
    std::string key;  // wanted rsid, or "line:N" for unparseable lines
    std::size_t line = 0;
    IssueKind kind = IssueKind::MalformedGT;
    std::string message;
};

struct GenotypeTable {
    std::map<std::string, GenotypeCall> calls;  // keyed by wanted rsid
    std::vector<VariantIssue> issues;
};

/// Single-sample VCF 4.x with a GT field. Structural problems throw
/// (NotVcf, NoSampleColumn, UnsupportedVcf); per-variant problems are
/// recorded in GenotypeTable::issues. Gzip input is inflated transparently.
GenotypeTable parse_genotypes(std::string_view text, const std::vector<WantedVariant>& wanted);

GenotypeTable read_genotypes(const std::filesystem::path& path, const std::vector<WantedVariant>& wanted);

/// Cheap format check for uploads: gzip or plain text starting with the
/// fileformat meta-line.
bool sniff(std::string_view bytes);

/// Parses a GT value ("0/1", "1|1", "./."). Returns nullopt if malformed.
std::optional<GenotypeCall> parse_gt(std::string_view gt);

}  // namespace dxagent::vcf
