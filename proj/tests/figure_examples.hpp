#pragma once

// Worked examples printed alongside the toy-DSL and full-DSL programs
// (inputs, expected outputs, program text).

#include <string>
#include <vector>

#include "lp/dsl.hpp"

namespace lp::testing {

struct FigureExample {
  std::string label;
  dsl::Dialect dialect;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string program;
  // Rows whose printed output the printed program does not produce (marked
  // as incorrect in the original table).
  std::vector<std::size_t> known_wrong_rows;
};

inline std::vector<FigureExample> toy_figure_examples() {
  using dsl::Dialect;
  return {
      {"toy-1", Dialect::Toy, {",C,XoC", ".G73,NT", ".Uvg t7MXI", ".tLqFJ .dMKlh"}, {"C", "G73", "Uvg", "tLqFJ"},
       "GetSpan_ALPHANUM_1_ALPHANUM_1", {}},
      {"toy-2", Dialect::Toy,
       {",3okM5,,,", ",, ,.O8p", ",, , ,IBpU", ",,,,mUV"},
       {"3okM5 ,3okM53okM5 ,3okM5", "O8p ,.O8pO8p ,.O8p", "IBpU ,IBpUIBpU ,IBpU", "mUV ,,,,mUVmUV ,,,,mUV"},
       "GetSpan_ALPHANUM_1_ALPHANUM_1 | GetSpan_,_-1_ALPHANUM_1 | GetSpan_ALPHANUM_1_ALPHANUM_-1 | GetSpan_,_2_ALPHANUM_1",
       // Printed outputs contain spaces absent from the inputs; no GetSpan can produce them.
       {0, 1, 2, 3}},
      {"toy-3", Dialect::Toy,
       {",CNBA,uJke.00 Hm 6938", ".Xp.sYH ,46,Rj ,330", ",gYR 85296 LRgJX,15,eWEeu", ".BPYVr ALVbf wEvm 86,103"},
       {"CNBA,uJke.00CNBA,6938", "Xp.sYH ,46Xp.sYH ,46,Rj ,330", "gYR 85296gYR 85296 LRgJX,15,15",
        "BPYVr ALVbf wEvm 86BPYVr ALVbf wEvm 86,103"},
       "GetSpan_WORD_1_NUMBER_1 | GetSpan_WORD_1_,_-1 | GetSpan_NUMBER_2_NUMBER_2", {}},
      {"toy-4", Dialect::Toy,
       {"r, 6150,XLQPl", ".ERYlM, 80,Iejg", "sqd,.xJx,01928", ".w Nqk.42,"},
       {"6150r, 6150r, 6150", "80ERYlM, 80ERYlM, 80", "01928sqd,.xJx,01928sqd,.xJx,01928", "42w Nqk.42w Nqk.42"},
       "GetSpan_NUMBER_-1_NUMBER_-1 | GetSpan_WORD_1_NUMBER_1 | GetSpan_WORD_1_,_-1",
       // These drop the final comma, which toy-3 keeps for the same expression.
       {0, 1, 2, 3}},
      {"toy-5", Dialect::Toy,
       {".VyPL 3785.0933,Xj EFSjp", ".023 Jz Suz.t .4", "TyCBs,803 TjtA,4 .qH", ".cCr,3248 L ,QPLd.6472"},
       {"VyPL37853785.0933,Xj EFSjp", "Jz023023 Jz Suz.t", "TyCBs803803 TjtA,4 .qH", "cCr32483248 L ,QPLd"},
       "GetSpan_WORD_1_WORD_1 | GetSpan_NUMBER_1_NUMBER_1 | GetSpan_NUMBER_1_WORD_-1", {}},
      {"toy-6", Dialect::Toy,
       {".Eu.F IgKFs,XD.011", ".U0Z,aVEzk,KNq 08,UqlhR", "44 j.Oz.peQy,l", ",FtAz CIHLB V 851.oR8l"},
       {"011F", "0Z", "44Oz", "851CIHLB"}, "GetSpan_NUMBER_1_NUMBER_1 | GetSpan_WORD_2_WORD_2", {}},
      {"toy-7", Dialect::Toy,
       {".9312 ..767", ".,04194,47460", ".4940..3646", ". .180,5275"},
       {"7679312 ..76793129312", "4746004194,474600419404194", "36464940..364649404940", "5275180,5275180180"},
       "GetSpan_NUMBER_2_NUMBER_-1 | GetSpan_NUMBER_1_NUMBER_-1 | GetSpan_NUMBER_1_NUMBER_1 | "
       "GetSpan_NUMBER_1_NUMBER_1",
       {}},
  };
}

inline std::vector<FigureExample> full_figure_examples() {
  using dsl::Dialect;
  return {
      {"names", Dialect::Full, {"Mason Smith", "Henry Myers", "Barry Underwood", "Sandy Jones"},
       {"Smith M", "Myers H", "Underwood B", "Jones S"},
       "GetToken_PROP_CASE_2 | Const( ) | GetToken_CHAR_1(GetToken_PROP_CASE_1)", {}},
      {"names-short", Dialect::Full, {"Mason Smith", "Henry Myers", "Barry Underwood", "Sandy Jones"},
       {"Smith M", "Myers H", "Underwood B", "Jones S"}, "GetToken_PROP_CASE_2 | Const( ) | GetToken_ALL_CAPS_1",
       {}},
      {"months", Dialect::Full, {"January 15", "febuary 28", "march 1", "October 31"},
       {"jan 15", "feb 28", "mar 1", "oct 31"}, "ToCase_LOWER(SubStr_1_3) | Const( ) | GetToken_NUMBER_1", {}},
      {"phone", Dialect::Full, {"(321) 704 3331", "(499) 123 3574", "(555) 580 8390", "(288)225 6116"},
       {"321.704.3331", "499.123.3574", "555.580.8390", "288.225.6116"},
       "GetToken_NUMBER_1 | Const(.) | Replace_ _.(SubStr_-8_-1)", {}},
      {"initials", Dialect::Full,
       {"Milk 4, Yoghurt 12, Juice 2, Egg 5", "US:38 China:35 Russia:27 India:1",
        "10 Apple 2 Oranges 13 Bananas 40 Pears", "parul 7 rico 12 wolfram 15 rick 19"},
       {"M.E.", "U.I.", "A.P.", "P.R."},
       "GetToken_CHAR_1(GetToken_PROP_CASE_1) | Const(.) | GetToken_CHAR_-1(GetAll_ALL_CAPS) | Const(.)", {3}},
  };
}

}  // namespace lp::testing
