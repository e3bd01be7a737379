"""Float formatting shared by every report writer."""


def f6(x: float) -> str:
    """Fixed 6 decimals; negative zero prints as zero so reruns stay byte-identical."""
    s = f"{float(x):.6f}"
    return "0.000000" if s == "-0.000000" else s
