"""Walk through building a guard-set hierarchy on the small tree topology.

Nine leaf ASes each host one guard.  Cone merging groups them into
supersets, each superset is split into cone sets, and each set is filled
into subsets.  Finally every guard gets a fixed-width g line.
"""

from guardsets.cli import emit_g_lines, g_line_overhead
from guardsets.fixtures import tree_graph, tree_guards
from guardsets.hierarchy import Thresholds, build_hierarchy, build_supersets, group_guard_ases


def main():
    graph = tree_graph()
    guards = tree_guards(bw_per_as=25.0)
    thr = Thresholds(tau_up=40, tau_down=20, n_supersets=2)

    print("merge log (cone merging over guard ASes):")
    events = []
    build_supersets(group_guard_ases(guards), graph, thr, events=events)
    for ev in events:
        print("  ", ev)

    h = build_hierarchy(guards, graph, thr)
    print("\nhierarchy:")
    for ss in h.supersets:
        print(f"  superset rooted at AS{ss.root_asn}: {ss.bandwidth_mbps:.0f} MBps")
        for s in ss.sets:
            root = "residual" if s.residual else f"cone of AS{s.root_asn}"
            print(f"    set ({root}) ASes {sorted(s.guard_ases)}")
            for sub in s.subsets:
                print(f"      subset {sub.bandwidth_mbps:.0f} MBps: {', '.join(sub.guards)}")

    print("\ng lines:")
    print(emit_g_lines(h), end="")
    print(f"overhead: {g_line_overhead(h)} bytes")


if __name__ == "__main__":
    main()
