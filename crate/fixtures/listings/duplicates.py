#python
import pandas as pd

# Assuming input_dfs[0] is your pandas dataframe

# Find duplicate records
duplicates = input_dfs[0][input_dfs[0].duplicated()]

# Create composable_table_out with only duplicate records
composable_table_out = duplicates.copy()

# Display composable_table_out
print(composable_table_out)
#
