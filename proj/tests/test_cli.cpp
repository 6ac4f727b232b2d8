#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "fomlab/io.hpp"

namespace {

struct Result {
    int status = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(FOMLAB_CLI) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

}  // namespace

TEST(Cli, HelpForEverySubcommand) {
    EXPECT_EQ(run("--help").status, 0);
    for (const char* sub : {"limits", "capacitance", "lifshitz", "hydro", "roughness", "simulate", "analyze", "budget",
                            "reproduce"}) {
        const auto r = run(std::string(sub) + " --help");
        EXPECT_EQ(r.status, 0) << sub;
        EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
    }
}

TEST(Cli, BadInvocationsFail) {
    EXPECT_NE(run("").status, 0);
    EXPECT_NE(run("limits --no-such-flag").status, 0);
    EXPECT_NE(run("frobnicate").status, 0);
    EXPECT_EQ(run("--config /nonexistent/fomlab.json limits").status, 2);
}

TEST(Cli, LimitsJson) {
    const auto r = run("limits --json");
    ASSERT_EQ(r.status, 0);
    const auto j = fomlab::io::json::parse(r.out);
    EXPECT_NEAR(j.at("d_min_m").get<double>(), 42.52e-9, 0.01e-9);
}

TEST(Cli, CapacitanceCsv) {
    const auto r = run("capacitance --ratio-range 1e-3 1 --points 5");
    ASSERT_EQ(r.status, 0);
    std::size_t lines = 0;
    for (char c : r.out) lines += c == '\n';
    EXPECT_EQ(lines, 6u);
}

TEST(Cli, SimulateIsDeterministic) {
    const auto a = run("--seed 5 simulate --runs 2");
    const auto b = run("--seed 5 simulate --runs 2");
    const auto c = run("--seed 6 simulate --runs 2");
    ASSERT_EQ(a.status, 0);
    EXPECT_FALSE(a.out.empty());
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out, c.out);
}
