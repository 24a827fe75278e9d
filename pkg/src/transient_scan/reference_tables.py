"""Published simulation values for the comparison tables, transcribed as
printed (including apparent misprints, e.g. 0.03065 and 0.2090 in the
MA(50) column of the one-dimensional table).

Designs are keyed by a short name; values are keyed ``(design, L, mu)``
where ``mu`` is the per-channel signal value in the table's row label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ChartSpec


@dataclass(frozen=True)
class Design:
    name: str
    spec: ChartSpec
    pattern: str = "all"  # "all" channels or "one" channel carry the signal


def _mewma(b, **kw):
    return ChartSpec("mewma", b, dimension=20, beta=0.05, **kw)


def _mma(b, w):
    return ChartSpec("mma", b / math.sqrt(w), dimension=20, window=w)


_GLR_WINDOWS = {"window_lo": 20, "window_hi": 50}

ONE_DIM = [
    Design("EWMA", ChartSpec("ewma", 2.95, beta=0.05)),
    Design("MA(10)", ChartSpec("ma", 0.99074, window=10)),
    Design("MA(20)", ChartSpec("ma", 0.6578, window=20)),
    Design("MA(50)", ChartSpec("ma", 0.394, window=50)),
    Design("CUSUM(0.5)", ChartSpec("cusum", 10.8, ref_strength=0.5)),
    Design("CUSUM(1.0)", ChartSpec("cusum", 5.88, ref_strength=1.0)),
    Design("GLRT", ChartSpec("wglr", 3.27, **_GLR_WINDOWS)),
]

MULTI_DIM = [
    Design("EWMA", _mewma(6.5)),
    Design("MA(10)", _mma(6.6, 10)),
    Design("MA(20)", _mma(6.5, 20)),
    Design("MA(50)", _mma(6.37, 50)),
    Design("CUSUM", ChartSpec("mcusum", 20.3, dimension=20, ref_strength=0.25 * math.sqrt(20),
                              **_GLR_WINDOWS)),
    Design("GLRT", ChartSpec("mglrt", 6.84, dimension=20, **_GLR_WINDOWS)),
]

THRESHOLDED = [
    Design("EWMA(weighted)", ChartSpec("mewma-soft", 0.1165, dimension=20, beta=0.05,
                                       soft_p=0.1), "one"),
    Design("EWMA(0.25)", ChartSpec("mewma-hard", 0.396, dimension=20, beta=0.05,
                                   hard_cut=0.25), "one"),
    Design("MA(0.25) w=20", ChartSpec("mma-hard", 1.26, dimension=20, window=20,
                                      hard_cut=0.25), "one"),
    Design("MA(0.25) w=10", ChartSpec("mma-hard", 3.47, dimension=20, window=10,
                                      hard_cut=0.25), "one"),
    Design("GLRT(0.25)", ChartSpec("mglrt-hard", 5.12, dimension=20, hard_cut=0.25,
                                   **_GLR_WINDOWS), "one"),
]

_T1 = """
20 0.0 0.0105 0.0090 0.0105 0.0102 0.0096 0.0106 0.00984
20 0.25 0.0634 0.0576 0.0719 0.0329 0.0516 0.0619 0.0507
20 0.5 0.2641 0.2387 0.3188 0.1088 0.2363 0.2742 0.2401
20 0.75 0.6232 0.5791 0.7180 0.2791 0.6123 0.6503 0.6167
20 1.00 0.9043 0.8750 0.9516 0.5380 0.9076 0.9214 0.9081
20 1.25 0.9892 0.9842 0.9970 0.7870 0.9911 0.9932 0.9910
20 1.50 0.9994 0.9994 0.99992 0.9300 0.99962 0.99974 0.99976
20 1.75 0.99994 0.999998 1.0000 0.9853 1.0000 1.0000 1.00
20 2.0 1.0 1.0 1.0 0.9979 1.0 1.0 1.00
30 0.0 0.0143 0.0125 0.0146 0.0138 0.0133 0.0156 0.0142
30 0.25 0.1228 0.0908 0.1275 0.0748 0.1068 0.1016 0.1153
30 0.5 0.4998 0.3637 0.5103 0.03065 0.4779 0.4322 0.5078
30 0.75 0.8889 0.7612 0.8866 0.6935 0.8876 0.8430 0.9007
30 1.00 0.9926 0.9668 0.9935 0.9382 0.9937 0.9878 0.9954
30 1.25 0.9999 0.9985 0.99992 0.9948 0.99996 0.99978 0.9999
30 1.50 1.0000 0.99998 1.0000 0.9999 1.0000 1.0000 1.00
30 1.75 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000 1.00
30 2.0 1.0 1.0 1.0 1.0 1.0 1.0 1.00
40 0.0 0.0169 0.01754 0.01998 0.01744 0.0169 0.0190 0.0165
40 0.25 0.1882 0.1243 0.1814 0.1394 0.1676 0.1406 0.1764
40 0.5 0.6833 0.4680 0.6420 0.5924 0.6750 0.5518 0.6867
40 0.75 0.9702 0.8625 0.9563 0.9424 0.9715 0.9308 0.9745
40 1.00 0.9996 0.9907 0.9990 0.9983 0.9997 0.9983 0.9997
40 1.25 1.0000 0.99996 1.0000 1.0000 0.99998 0.99998 1.0000
40 1.50 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000 1.00
40 1.75 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000 1.00
40 2.0 1.0 1.0 1.0 1.0 1.0 1.0 1.00
50 0.0 0.0217 0.0217 0.0253 0.2090 0.0203 0.0233 0.0202
50 0.25 0.2591 0.1550 0.2309 0.2447 0.2353 0.1802 0.2356
50 0.5 0.8093 0.5549 0.7461 0.8351 0.8020 0.6540 0.8051
50 0.75 0.9923 0.9202 0.9839 0.9962 0.9940 0.9694 0.9931
50 1.00 0.99998 0.9975 0.99998 1.0000 1.0000 0.99972 1.0000
50 1.25 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000
50 1.50 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000
50 1.75 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000 1.0000
50 2.0 1.0 1.0 1.0 1.0 1.0 1.0 1.0
"""

_T3 = """
20 0.0 0.0198 0.0219 0.0209 0.0199 0.0228 0.0195
20 0.1 0.0441 0.0446 0.0507 0.0276 0.0316 0.0386
20 0.2 0.2547 0.2229 0.3250 0.0806 0.2104 0.2204
20 0.25 0.5037 0.4367 0.6280 0.1463 0.4536 0.5024
20 0.3 0.7667 0.6921 0.8743 0.2763 0.7378 0.7754
20 0.4 0.9875 0.9760 0.9983 0.6572 0.9894 0.9920
20 0.5 0.99996 0.99984 1.00 1.00 1.00 1.00
30 0.0 0.0287 0.0323 0.0301 0.0283 0.0272 0.0256
30 0.1 0.0920 0.0706 0.0926 0.0547 0.0864 0.0842
30 0.2 0.5643 0.3449 0.5541 0.2973 0.6014 0.5906
30 0.25 0.8582 0.6180 0.8467 0.5656 0.8842 0.8798
30 0.3 0.9795 0.8635 0.9752 0.8381 0.9894 0.9868
30 0.4 0.99994 0.99768 0.99994 0.9959 1.0000 1.0000
30 0.5 1.0 1.00 1.00 1.00 1.00 1.00
50 0.0 0.0460 0.0513 0.0485 0.0438 0.0396 0.0424
50 0.1 0.2154 0.1232 0.1740 0.2133 0.2060 0.1970
50 0.2 0.9049 0.5344 0.8035 0.9517 0.9284 0.9214
50 0.25 0.9948 0.8264 0.9733 0.9989 0.9978 0.9972
50 0.3 0.99992 0.97066 0.99914 1.0000 1.0000 1.0000
50 0.4 1.00 1.0 1.00 1.00 1.00 1.00
50 0.5 1.00 1.00 1.00 1.00 1.00 1.00
"""

_T4 = """
20 0.0 0.0195 0.0206 0.0218 0.194 0.0202 0.0206
20 0.25 0.0252 0.0268 0.0270 0.0204 0.0222 0.0218
20 0.5 0.0539 0.0541 0.0622 0.0331 0.0436 0.0408
20 0.75 0.1432 0.1326 0.1809 0.0525 0.1146 0.1208
20 1.0 0.3582 0.3116 0.4603 0.1066 0.3022 0.3370
20 1.25 0.6642 0.5854 0.7928 0.2211 0.6430 0.6690
20 1.5 0.8973 0.8434 0.9599 0.3931 0.8884 0.9076
20 1.75 0.9835 0.9678 0.9968 0.6252 0.9874 0.9878
20 2.00 0.99872 0.9972 0.99988 0.8086 0.9986 0.9994
30 0.0 0.0271 0.0315 0.0305 0.0264 0.0274 0.0288
30 0.25 0.0426 0.0404 0.0455 0.0349 0.0406 0.0428
30 0.5 0.1177 0.0840 0.1196 0.0606 0.1112 0.1060
30 0.75 0.3539 0.2119 0.3507 0.1831 0.3566 0.3344
30 1.0 0.7212 0.4675 0.7111 0.4276 0.7468 0.7438
30 1.25 0.9490 0.7753 0.9438 0.7400 0.9674 0.9622
30 1.5 0.9965 0.9530 0.9960 0.9394 0.9982 0.9980
30 1.75 0.99988 0.9965 0.99992 0.9926 1.00 1.00
30 2.00 1.00 0.99992 1.00 0.9998 1.00 1.00
50 0.0 0.0480 0.0513 0.0484 0.0421 0.0398 0.0432
50 0.25 0.0799 0.0682 0.0756 0.0711 0.0732 0.0672
50 0.5 0.2814 0.1445 0.2210 0.2966 0.2702 0.2642
50 0.75 0.7116 0.3471 0.5727 0.7862 0.7574 0.7316
50 1.0 0.9693 0.6835 0.9117 0.9876 0.9798 0.9802
50 1.25 0.99952 0.9330 0.9959 0.9999 1.0000 0.9994
50 1.5 1.00 0.9963 1.00 1.00 1.00 1.00
50 1.75 1.00 0.99998 1.00 1.00 1.00 1.00
50 2.00 1.00 1.0 1.00 1.00 1.00 1.00
"""

_T5 = """
10 0.0 0.0113 0.0106 0.0111 0.0107 0.0126
10 0.25 0.0120 0.0117 0.0121 0.0126 0.0132
10 0.5 0.0162 0.0180 0.0155 0.0199 0.0174
10 0.75 0.0279 0.0406 0.0233 0.0413 0.0260
10 1.0 0.0658 0.1081 0.0418 0.1003 0.0400
10 1.25 0.1442 0.2503 0.0829 0.2358 0.0728
10 1.5 0.2839 0.4685 0.1600 0.4519 0.1500
10 1.75 0.4858 0.7003 0.2829 0.6978 0.2630
10 2.00 0.6932 0.8682 0.4514 0.8843 0.4210
20 0.0 0.0191 0.0190 0.0213 0.0192 0.0234
20 0.25 0.02466 0.0241 0.0272 0.0311 0.0284
20 0.5 0.05486 0.0695 0.0671 0.0516 0.0588
20 0.75 0.1731 0.2764 0.2067 0.1262 0.1922
20 1.0 0.4338 0.6217 0.5167 0.3000 0.4722
20 1.25 0.7607 0.9028 0.8433 0.5623 0.7946
20 1.5 0.9438 0.9870 0.9767 0.8265 0.9680
20 1.75 0.9940 0.9993 0.9987 0.9576 0.9972
20 2.00 0.99968 1.00 0.9999 0.9960 1.00
30 0.0 0.0276 0.0265 0.0289 0.0343 0.0314
30 0.25 0.0401 0.0414 0.0429 0.0411 0.0488
30 0.5 0.1292 0.1783 0.1270 0.0807 0.1524
30 0.75 0.4129 0.5957 0.3928 0.1980 0.4520
30 1.0 0.8015 0.9248 0.7569 0.4535 0.8474
30 1.25 0.9744 0.9965 0.9632 0.7512 0.9898
30 1.5 0.9993 1.00 0.9984 0.9456 0.9998
30 1.75 0.99998 1.00 1.00 0.9960 1.00
30 2.00 1.00 1.00 1.00 0.9998 1.00
50 0.0 0.0447 0.0464 0.0474 0.0512 0.0472
50 0.25 0.0825 0.0929 0.0772 0.0673 0.0790
50 0.5 0.3168 0.4436 0.2342 0.1424 0.3148
50 0.75 0.7840 0.9094 0.6427 0.3355 0.8030
50 1.0 0.9869 0.9977 0.9400 0.6590 0.9944
50 1.25 0.9998 1.00 0.9983 0.9238 1.00
50 1.5 1.00 1.00 1.00 0.9949 1.00
50 1.75 1.00 1.00 1.00 1.00 1.00
50 2.00 1.00 1.00 1.00 1.00 1.00
"""

# b, then (simulated, approximation) for MEWMA, MMA w=10, MMA w=20, MGLRT
_T2 = """
6.0 0.0985 0.0992 0.1466 0.1324 0.0983 0.0998 0.2456 0.4076
6.1 0.0724 0.7403 0.1106 0.0984 0.0770 0.0746 0.1916 0.3097
6.2 0.0543 0.5440 0.0846 0.0720 0.0565 0.0549 0.1483 0.2318
6.3 0.0400 0.0394 0.0598 0.0519 0.0393 0.0398 0.1162 0.1709
6.4 0.0274 0.0281 0.0422 0.0368 0.0288 0.0284 0.0842 0.1240
6.5 0.0190 0.0197 0.0308 0.0258 0.0205 0.0200 0.0556 0.0887
6.6 0.0140 0.0136 0.0207 0.0178 0.0143 0.0138 0.0436 0.0625
6.7 0.0096 0.0093 0.0145 0.0121 0.0097 0.0095 0.0284 0.0434
6.8 0.0065 0.0063 0.0093 0.0081 0.0074 0.0066 0.0226 0.0298
6.9 0.0044 0.0041 0.0066 0.0054 0.0043 0.0042 0.0178 0.0200
7.0 0.0026 0.0027 0.0041 0.0035 0.0030 0.0028 0.0102 0.0134
"""

# bracketed closed-form values printed under the L=20, mu=0 row of T1
T1_APPROX = {"EWMA": 0.0103, "MA(10)": 0.0082, "MA(20)": 0.0090, "MA(50)": 0.0066,
             "CUSUM(0.5)": 0.0063, "CUSUM(1.0)": 0.0087, "GLRT": 0.0049}


def _parse(block: str, names: list[str]) -> dict[tuple[str, int, float], float]:
    values = {}
    for line in block.strip().splitlines():
        L, mu, *cells = line.split()
        for name, cell in zip(names, cells, strict=True):
            values[(name, int(L), float(mu))] = float(cell)
    return values


@dataclass(frozen=True)
class ReferenceTable:
    table_id: str
    title: str
    designs: list[Design]
    values: dict[tuple[str, int, float], float]
    pattern: str

    @property
    def horizons(self) -> list[int]:
        return sorted({L for _, L, _ in self.values})

    @property
    def strengths(self) -> list[float]:
        return sorted({mu for _, _, mu in self.values})

    def design(self, name: str) -> Design:
        for d in self.designs:
            if d.name == name:
                return d
        raise KeyError(name)


def _table2() -> tuple[dict, dict]:
    names = ["EWMA", "MA(10)", "MA(20)", "GLRT"]
    sim, approx = {}, {}
    for line in _T2.strip().splitlines():
        b, *cells = line.split()
        for i, name in enumerate(names):
            sim[(name, 20, float(b))] = float(cells[2 * i])
            approx[(name, 20, float(b))] = float(cells[2 * i + 1])
    return sim, approx


T2_SIM, T2_APPROX = _table2()


def table2_spec(name: str, b: float) -> ChartSpec:
    """Design of the FDP-comparison table at boundary ``b`` (keys of T2_SIM
    use ``b`` in place of ``mu``)."""
    if name == "EWMA":
        return _mewma(b)
    if name == "MA(10)":
        return _mma(b, 10)
    if name == "MA(20)":
        return _mma(b, 20)
    if name == "GLRT":
        return ChartSpec("mglrt", b, dimension=20, **_GLR_WINDOWS)
    raise KeyError(name)


_T2_DESIGNS = [Design(n, table2_spec(n, 6.5)) for n in ("EWMA", "MA(10)", "MA(20)", "GLRT")]

TABLES = {
    "t1": ReferenceTable("t1", "POD, one-sided change, N=1", ONE_DIM,
                     _parse(_T1, [d.name for d in ONE_DIM]), "all"),
    "t2": ReferenceTable("t2", "FDP, simulated vs closed form, N=20, L=20", _T2_DESIGNS,
                     T2_SIM, "all"),
    "t3": ReferenceTable("t3", "POD, N=20, all channels change", MULTI_DIM,
                     _parse(_T3, [d.name for d in MULTI_DIM]), "all"),
    "t4": ReferenceTable("t4", "POD, N=20, one channel changes", MULTI_DIM,
                     _parse(_T4, [d.name for d in MULTI_DIM]), "one"),
    "t5": ReferenceTable("t5", "POD, N=20, one channel changes, thresholded charts",
                     THRESHOLDED, _parse(_T5, [d.name for d in THRESHOLDED]), "one"),
}
