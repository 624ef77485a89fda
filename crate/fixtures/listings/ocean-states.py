#
import pandas as pd

# create a dictionary of States and their ocean borders
states_dict = {'Maine': 'Atlantic', 'New Hampshire': 'Atlantic',
'Massachusetts': 'Atlantic', 'Rhode Island': 'Atlantic', 'Connecticut':
'Atlantic', 'New York': 'Atlantic', 'New Jersey': 'Atlantic', 'Delaware':
'Atlantic', 'Maryland': 'Atlantic', 'Virginia': 'Atlantic', 'North Carolina':
'Atlantic', 'South Carolina': 'Atlantic', 'Georgia': 'Atlantic', 'Florida':
'Atlantic', 'Texas': 'Gulf of Mexico', 'Louisiana': 'Gulf of Mexico',
'Mississippi': 'Gulf of Mexico', 'Alabama': 'Gulf of Mexico', 'California':
'Pacific', 'Oregon': 'Pacific', 'Washington': 'Pacific', 'Alaska': 'Pacific'}

# create a pandas dataframe from the dictionary
composable_table_out = pd.DataFrame(list(states_dict.items()),
columns=['State', 'Ocean Border'])

# filter the dataframe to only include States that border the ocean
composable_table_out = composable_table_out[composable_table_out['Ocean Border'].notnull()]

# display the dataframe
print(composable_table_out)
#
