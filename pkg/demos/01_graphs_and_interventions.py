"""Walk through the graph layer: parsing, surgery, and path selection.

The running example is a four-variable graph: a root cause feeds both the
sensitive attribute and the outcome, and a mediator sits on the indirect
route between them.
"""

from fairweigh import (
    direct_path_set,
    enumerate_paths,
    indirect_path_set,
    intervention_surgery,
    parse_graph,
    total_path_set,
)

DOC = """
[nodes]
background continuous
sensitive  categorical 2
mediator   continuous
outcome    categorical 2

[edges]
background -> sensitive
background -> outcome
sensitive  -> mediator
sensitive  -> outcome
mediator   -> outcome

[roles]
sensitive sensitive
outcome   outcome
"""

graph = parse_graph(DOC)
print(graph)
print("topological order:", " -> ".join(graph.topo_order))
print("roots:", graph.roots)

print("\nAn intervention replaces the sensitive mechanism with a constant,")
print("so its incoming edges disappear:")
cut = intervention_surgery(graph)
print("  before:", sorted(graph.edges))
print("  after: ", sorted(cut.edges))

print("\nEvery directed route from the sensitive node to the outcome:")
for path in enumerate_paths(graph):
    print("  " + " -> ".join([path[0][0]] + [child for _, child in path]))

print("\nPath selections for the three fairness notions:")
print("  total:        ", sorted(total_path_set(graph).on_pi_edges))
print("  direct only:  ", sorted(direct_path_set(graph).on_pi_edges))
print("  indirect only:", sorted(indirect_path_set(graph).on_pi_edges))
