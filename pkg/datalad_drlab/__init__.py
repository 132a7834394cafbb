"""DataLad extension for numerical experiments on the Derrida-Retaux model"""

__docformat__ = "restructuredtext"

# bound as the datalad.extensions entry point in setup.cfg
command_suite = (
    "Derrida-Retaux laboratory: exact evolution, tree sampling and fits",
    [
        ("datalad_drlab.lab", "Drlab", "drlab", "drlab"),
    ],
)

__version__ = "0.1.0"
