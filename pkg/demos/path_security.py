"""Vulnerable-stream rates on a toy AS path table.

A stream is vulnerable when some AS sits on both the client-guard side and
the exit-destination side.  With the DeNASA-style filters, clients avoid
guard sets and exits exposed to a few suspect transit ASes.
"""

from guardsets import fixtures as fx
from guardsets.pathsec import ExitProbabilityTable, PathSecConfig, vulnerable_stream_rate


def main():
    table = ExitProbabilityTable(fx.PATH_TABLE_SUSPECTS, fx.PATH_TABLE_ROWS)
    for denasa in (False, True):
        cfg = PathSecConfig(exits=fx.PATH_EXITS, denasa=denasa, table=table)
        res = vulnerable_stream_rate(fx.PATH_CLIENTS, fx.PATH_STREAMS, fx.path_guard_sets(),
                                     fx.path_oracle(), cfg)
        label = "filtered" if denasa else "plain"
        for ci, rate in res.rates.items():
            print(f"{label:>8}  client AS{fx.PATH_CLIENTS[ci]}: rate {rate}  (skipped weight {res.skipped[ci]})")


if __name__ == "__main__":
    main()
