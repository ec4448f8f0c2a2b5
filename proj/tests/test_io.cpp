#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "lbdp/io.hpp"
#include "lbdp/simulate.hpp"

using namespace lbdp;

namespace {

Panel parse(const std::string& text) {
  std::istringstream in(text);
  return read_panel_csv(in);
}

std::string parse_failure(const std::string& text) {
  try {
    parse(text);
  } catch (const parse_error& e) {
    return e.what();
  }
  return "no error";
}

}  // namespace

TEST(FormatNumber, ShortestRoundTrip) {
  std::mt19937_64 eng(3);
  for (int i = 0; i < 20000; ++i) {
    double v;
    const std::uint64_t bits = eng();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const auto s = format_number(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
    EXPECT_LE(s.size(), 24u);
  }
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(NAN), "nan");
}

TEST(PanelCsv, RoundTripIsExact) {
  SimConfig cfg{Rates(7, 5), 10, {0.0, 0.1, 0.30000000000000004, 1.0 / 3.0}, true, 4};
  const auto panel = simulate_panel(cfg, 5).panel;
  std::stringstream buf;
  write_panel_csv(buf, panel);
  const auto back = read_panel_csv(buf);
  ASSERT_EQ(back.size(), panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    EXPECT_TRUE(std::ranges::equal(back[i].times(), panel[i].times()));
    EXPECT_TRUE(std::ranges::equal(back[i].counts(), panel[i].counts()));
  }
}

TEST(PanelCsv, CommentsBlankLinesAndGrouping) {
  const auto p = parse(
      "# schema: lbdp.panel/1\n\ntrajectory_id,time,count\r\n"
      "b,0.2,7\n"
      "a,0,3\n"
      "b,0,5\n"
      "# mid-file note\n"
      "a,0.5,4\n"
      "b,0.1,6\n");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_TRUE(std::ranges::equal(p[0].counts(), std::vector<std::int64_t>{5, 6, 7}));
  EXPECT_TRUE(std::ranges::equal(p[0].times(), std::vector<double>{0, 0.1, 0.2}));
  EXPECT_TRUE(std::ranges::equal(p[1].counts(), std::vector<std::int64_t>{3, 4}));
}

TEST(PanelCsv, RowNumberedErrors) {
  const std::string h = "trajectory_id,time,count\n";
  EXPECT_EQ(parse_failure("id,t,n\n1,0,3\n"), "line 1: expected header 'trajectory_id,time,count'");
  EXPECT_EQ(parse_failure(h + "1,0,3\n1,0.1\n"), "line 3: expected 3 fields, found 2");
  EXPECT_EQ(parse_failure(h + "1,0,3,4\n"), "line 2: expected 3 fields, found 4");
  EXPECT_EQ(parse_failure(h + ",0,3\n"), "line 2: empty trajectory_id");
  EXPECT_EQ(parse_failure(h + "1,zero,3\n"), "line 2: time 'zero' is not a finite number");
  EXPECT_EQ(parse_failure(h + "1,inf,3\n"), "line 2: time 'inf' is not a finite number");
  EXPECT_EQ(parse_failure(h + "1,0,-2\n"), "line 2: count '-2' is not a non-negative integer");
  EXPECT_EQ(parse_failure(h + "1,0,2.5\n"), "line 2: count '2.5' is not a non-negative integer");
  EXPECT_EQ(parse_failure(h + "1,0,3\n1,0.1,4\n1,0.1,5\n"),
            "line 4: duplicate row for trajectory '1' at time 0.1 (first on line 3)");
  EXPECT_EQ(parse_failure(""), "line 0: missing header");
  EXPECT_EQ(parse_failure(h), "no data rows");
}

TEST(PanelCsv, InvalidTrajectoryNamesId) {
  const auto msg = parse_failure("trajectory_id,time,count\nok,0,3\nok,1,4\nlonely,0,3\n");
  EXPECT_NE(msg.find("trajectory 'lonely' (first row on line 4)"), std::string::npos) << msg;
  const auto zero = parse_failure("trajectory_id,time,count\nz,0,0\nz,1,0\n");
  EXPECT_NE(zero.find("trajectory 'z'"), std::string::npos) << zero;
}

TEST(PanelCsv, DistinctIdsMayShareTimes) {
  const auto p = parse("trajectory_id,time,count\n1,0,3\n2,0,3\n1,1,4\n2,1,5\n");
  EXPECT_EQ(p.size(), 2u);
}
