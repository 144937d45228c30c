"""Formal verification of executable robot plans against LTL safety specifications."""

from __future__ import annotations

from .automaton import Fsa, ProductAutomaton, bounded_traces, fsa_to_dot, join, product, product_to_dot
from .checker import Counterexample, Result, Verdict, brute_force_check, explain, verify, verify_all, verify_product
from .composition import CompositionPlan, check_connection, compose_and_certify
from .exe2fsa import compile_plan, keyword_processor, tree2fsa
from .plan_frontend import parse_plan, print_plan
from .spec_logic import Monitor, SafetyFormula, build_monitor, parse_formula, parse_spec
from .system_model import SystemSpec, TransitionSystem, build_transition_system, load_system

__version__ = "0.1.0"

__all__ = [
    "Counterexample",
    "CompositionPlan",
    "Fsa",
    "Monitor",
    "ProductAutomaton",
    "Result",
    "SafetyFormula",
    "SystemSpec",
    "TransitionSystem",
    "Verdict",
    "bounded_traces",
    "brute_force_check",
    "build_monitor",
    "build_transition_system",
    "check_connection",
    "compile_plan",
    "compose_and_certify",
    "explain",
    "fsa_to_dot",
    "join",
    "keyword_processor",
    "load_system",
    "parse_formula",
    "parse_plan",
    "parse_spec",
    "print_plan",
    "product",
    "product_to_dot",
    "tree2fsa",
    "verify",
    "verify_all",
    "verify_product",
]
