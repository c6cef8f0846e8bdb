#include "tailnet/graphml.hpp"

#include "tailnet/csv.hpp"

namespace tailnet {

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_graphml(std::ostream& out, const SignedAdjacency& adjacency, std::span<const std::string> symbols,
                   const Eigen::VectorXd& caps, const Eigen::VectorXd& contributions) {
    const auto n = adjacency.a.rows();
    if (static_cast<Eigen::Index>(symbols.size()) != n || caps.size() != n || contributions.size() != n) {
        throw std::invalid_argument("write_graphml: node attribute lengths do not match the adjacency");
    }
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" "
           "xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" "
           "xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns "
           "http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n"
        << "  <key id=\"symbol\" for=\"node\" attr.name=\"symbol\" attr.type=\"string\"/>\n"
        << "  <key id=\"market_cap\" for=\"node\" attr.name=\"market_cap\" attr.type=\"double\"/>\n"
        << "  <key id=\"contribution\" for=\"node\" attr.name=\"contribution\" attr.type=\"double\"/>\n"
        << "  <key id=\"sign\" for=\"edge\" attr.name=\"sign\" attr.type=\"int\"/>\n"
        << "  <graph id=\"" << format_date(adjacency.date) << "\" edgedefault=\"undirected\">\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        out << "    <node id=\"n" << i << "\">\n"
            << "      <data key=\"symbol\">" << xml_escape(symbols[static_cast<std::size_t>(i)]) << "</data>\n"
            << "      <data key=\"market_cap\">" << csv::format_double(caps(i)) << "</data>\n"
            << "      <data key=\"contribution\">" << csv::format_double(contributions(i)) << "</data>\n"
            << "    </node>\n";
    }
    Eigen::Index edge = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const int sign = adjacency.a(i, j);
            if (sign == 0) continue;
            out << "    <edge id=\"e" << edge++ << "\" source=\"n" << i << "\" target=\"n" << j << "\">\n"
                << "      <data key=\"sign\">" << sign << "</data>\n"
                << "    </edge>\n";
        }
    }
    out << "  </graph>\n</graphml>\n";
}

}  // namespace tailnet
