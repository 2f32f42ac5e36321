"""Interactive select-project queries over data stored on the cluster."""
from .engine import (PREDICATES, Predicate, QueryCluster, QueryPlan, QueryResult, QuerySession, Record, canned,
                     default_seizure_model, execute, marshal_records, plan, run_query, unmarshal_records)
from .language import (And, BoolLit, Call, Compare, DataRef, ElectrodeRange, Name, Not, Or, QueryAst, TimeExpr,
                       TimeRange, Token, parse, to_text, tokenize)

__all__ = [
    "PREDICATES", "Predicate", "QueryCluster", "QueryPlan", "QueryResult", "QuerySession", "Record", "canned",
    "default_seizure_model", "execute", "marshal_records", "plan", "run_query", "unmarshal_records", "And",
    "BoolLit", "Call", "Compare", "DataRef", "ElectrodeRange", "Name", "Not", "Or", "QueryAst", "TimeExpr",
    "TimeRange", "Token", "parse", "to_text", "tokenize",
]
