# Sphinx configuration for the rwre-lab documentation.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from rwre_lab import __version__  # noqa: E402

# -- Project information -----------------------------------------------------

project = 'rwre-lab'
copyright = '2024, rwre-lab Contributors'
author = 'rwre-lab Contributors'
release = __version__
version = __version__

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosummary',
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
]

exclude_patterns = ['_build', 'api/generated/*.tmp']
source_suffix = '.rst'
master_doc = 'index'

# -- autodoc / autosummary ---------------------------------------------------

autodoc_typehints = 'description'
autodoc_member_order = 'bysource'
autodoc_default_options = {
    'members': True,
    'show-inheritance': True,
}
autosummary_generate = True

# -- napoleon (Google-style docstrings) --------------------------------------

napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_include_init_with_doc = True
napoleon_use_param = True
napoleon_use_rtype = True
napoleon_attr_annotations = True

# -- HTML output -------------------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_theme_options = {
    'navigation_depth': 3,
    'collapse_navigation': False,
}

# -- intersphinx -------------------------------------------------------------

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'jinja2': ('https://jinja.palletsprojects.com/en/stable/', None),
}
