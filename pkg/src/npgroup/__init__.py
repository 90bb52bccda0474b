"""Nonparametric ANOVA-type group significance test and BY-driven backward group selection."""

from npgroup.anovatest import TestConfig, TestResult, group_test, univariate_test
from npgroup.projection import first_pc, sir, supervised_pc
from npgroup.selection import GroupMap, SelectConfig, backward_select, by_cutoff
from npgroup.smoothing import Bandwidth, KernelSpec, default_bandwidth, local_poly_fit

__all__ = [
    "Bandwidth",
    "GroupMap",
    "KernelSpec",
    "SelectConfig",
    "TestConfig",
    "TestResult",
    "backward_select",
    "by_cutoff",
    "default_bandwidth",
    "first_pc",
    "group_test",
    "local_poly_fit",
    "sir",
    "supervised_pc",
    "univariate_test",
]
