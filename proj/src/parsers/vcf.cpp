#include "dxagent/parsers/vcf.hpp"

#include <algorithm>
#include <charconv>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"

namespace dxagent::vcf {

namespace {

std::string_view strip_chr(std::string_view chrom) {
    if (chrom.size() > 3 && (chrom.substr(0, 3) == "chr" || chrom.substr(0, 3) == "CHR")) chrom.remove_prefix(3);
    return chrom;
}

// Columns are tab-separated; lines typed by hand with spaces are accepted too.
std::vector<std::string_view> columns(std::string_view line) {
    std::vector<std::string_view> out;
    const bool tabs = line.find('\t') != std::string_view::npos;
    std::size_t i = 0;
    while (i <= line.size()) {
        if (!tabs) {
            while (i < line.size() && line[i] == ' ') ++i;
            if (i == line.size()) break;
        }
        std::size_t j = line.find(tabs ? '\t' : ' ', i);
        if (j == std::string_view::npos) j = line.size();
        out.push_back(line.substr(i, j - i));
        i = j + 1;
    }
    return out;
}

std::vector<std::string_view> split_view(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (true) {
        auto j = s.find(sep, i);
        out.push_back(s.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
        if (j == std::string_view::npos) break;
        i = j + 1;
    }
    return out;
}

}  // namespace

std::optional<GenotypeCall> parse_gt(std::string_view gt) {
    GenotypeCall call;
    std::size_t sep = gt.find_first_of("/|");
    if (sep == std::string_view::npos) return std::nullopt;  // haploid calls are not supported
    if (gt.find_first_of("/|", sep + 1) != std::string_view::npos) return std::nullopt;
    call.phased = gt[sep] == '|';
    const std::string_view parts[2] = {gt.substr(0, sep), gt.substr(sep + 1)};
    bool missing = false;
    int alt = 0;
    for (int k = 0; k < 2; ++k) {
        if (parts[k] == ".") {
            missing = true;
            call.alleles[k] = -1;
        } else if (parts[k] == "0" || parts[k] == "1") {
            call.alleles[k] = parts[k][0] - '0';
            alt += call.alleles[k];
        } else {
            return std::nullopt;
        }
    }
    if (!missing) call.dosage = alt;
    return call;
}

bool sniff(std::string_view bytes) {
    if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f && static_cast<unsigned char>(bytes[1]) == 0x8b) {
        try {
            return sniff(maybe_gunzip(bytes, 64));
        } catch (const Error&) {
            return false;
        }
    }
    return bytes.substr(0, 16) == "##fileformat=VCF";
}

GenotypeTable parse_genotypes(std::string_view input, const std::vector<WantedVariant>& wanted) {
    std::string inflated;
    if (input.size() >= 2 && static_cast<unsigned char>(input[0]) == 0x1f && static_cast<unsigned char>(input[1]) == 0x8b) {
        inflated = maybe_gunzip(input);
        input = inflated;
    }

    GenotypeTable table;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::size_t pos = 0;

    while (pos < input.size()) {
        std::size_t end = input.find('\n', pos);
        if (end == std::string_view::npos) end = input.size();
        std::string_view line = input.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (line_no == 1) {
            if (line.substr(0, 16) != "##fileformat=VCF") fail(ErrorCode::NotVcf, "missing ##fileformat=VCF meta-line");
            if (line.substr(16, 3) != "v4.") fail(ErrorCode::UnsupportedVcf, "only VCF 4.x is supported: " + std::string(line));
            continue;
        }
        if (line.empty()) continue;
        if (line.substr(0, 2) == "##") continue;
        if (line[0] == '#') {
            auto cols = columns(line);
            if (cols.empty() || cols[0] != "#CHROM") fail(ErrorCode::NotVcf, "malformed column header line");
            if (cols.size() < 10) fail(ErrorCode::NoSampleColumn, "no sample column in header");
            if (cols.size() > 10) fail(ErrorCode::UnsupportedVcf, "multi-sample VCF (" + std::to_string(cols.size() - 9) + " samples)");
            saw_header = true;
            continue;
        }
        if (!saw_header) fail(ErrorCode::NotVcf, "data line before #CHROM header");

        auto cols = columns(line);
        if (cols.size() < 10) {
            table.issues.push_back({"line:" + std::to_string(line_no), line_no, IssueKind::MalformedLine,
                                    "expected 10 columns, found " + std::to_string(cols.size())});
            continue;
        }
        const std::string_view chrom = cols[0], id = cols[2];
        std::int64_t position = 0;
        auto [p, ec] = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), position);
        if (ec != std::errc() || p != cols[1].data() + cols[1].size()) {
            table.issues.push_back({"line:" + std::to_string(line_no), line_no, IssueKind::MalformedLine, "bad POS"});
            continue;
        }

        // rsid first, then configured position
        const WantedVariant* match = nullptr;
        const auto ids = split_view(id, ';');
        for (const auto& w : wanted) {
            if (id != "." && std::find(ids.begin(), ids.end(), w.rsid) != ids.end()) {
                match = &w;
                break;
            }
        }
        if (!match) {
            for (const auto& w : wanted) {
                if (w.chrom && w.pos && *w.pos == position && strip_chr(*w.chrom) == strip_chr(chrom)) {
                    match = &w;
                    break;
                }
            }
        }
        if (!match) continue;
        const std::string key = match->rsid;

        if (cols[4].find(',') != std::string_view::npos) {
            table.issues.push_back({key, line_no, IssueKind::MultiAllelic, "multi-allelic site " + std::string(cols[4])});
            continue;
        }
        auto format = split_view(cols[8], ':');
        std::size_t gt_index = format.size();
        for (std::size_t k = 0; k < format.size(); ++k)
            if (format[k] == "GT") gt_index = k;
        auto sample = split_view(cols[9], ':');
        if (gt_index == format.size() || gt_index >= sample.size()) {
            table.issues.push_back({key, line_no, IssueKind::MalformedGT, "no GT field"});
            continue;
        }
        auto call = parse_gt(sample[gt_index]);
        if (!call) {
            table.issues.push_back({key, line_no, IssueKind::MalformedGT, "malformed GT '" + std::string(sample[gt_index]) + "'"});
            continue;
        }
        call->rsid = key;
        call->chrom = std::string(chrom);
        call->pos = position;
        call->ref_allele = std::string(cols[3]);
        call->alt_allele = std::string(cols[4]);
        if (table.calls.count(key)) {
            table.issues.push_back({key, line_no, IssueKind::Duplicate, "duplicate record; first one kept"});
            continue;
        }
        table.calls.emplace(key, std::move(*call));
    }
    if (line_no == 0) fail(ErrorCode::NotVcf, "empty input");
    if (!saw_header) fail(ErrorCode::NoSampleColumn, "no #CHROM header line");
    return table;
}

GenotypeTable read_genotypes(const std::filesystem::path& path, const std::vector<WantedVariant>& wanted) {
    return parse_genotypes(read_file_maybe_gzip(path), wanted);
}

}  // namespace dxagent::vcf
